//! Measurement toolkit for legacy Google QUIC (gQUIC) deployments.

pub mod campaign;
pub mod domain;
pub mod handshake;
pub mod mock;
pub mod net;
pub mod probe;
pub mod report;
pub mod traffic;
pub mod util;
pub mod wire;
