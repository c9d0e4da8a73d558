//! Scriptable gQUIC endpoint used as the oracle for network-facing code.
//!
//! A responder binds one or more UDP sockets and answers client hellos
//! according to a [`ResponderProfile`]: version negotiation, public reset,
//! silence, garbage, or a REJ carrying a server config and certificates.
//! Every received datagram is logged; the log is handed back on shutdown.

mod profile;
mod responder;

pub use profile::{Behavior, ResponderProfile, DEFAULT_GARBAGE, DEFAULT_SOURCE_TOKEN};
pub use responder::{respond, serve, serve_routes, Action, LogEntry, ProfileRoutes, ResponderHandle, ResponderLog};

#[derive(Debug, thiserror::Error)]
pub enum MockError {
    #[error("cannot bind {0}: {1}")]
    BindFailed(std::net::SocketAddr, #[source] std::io::Error),
    #[error("invalid responder profile: {0}")]
    InvalidProfile(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
