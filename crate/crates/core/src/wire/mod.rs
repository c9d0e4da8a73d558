//! Encoder and decoder for the early (Q0xx) gQUIC wire format.
//!
//! Covers the public header, version negotiation and public reset packets,
//! tag-value handshake messages, server configs and certificate blobs. The
//! byte layout is documented with worked hex examples in `WIRE.md` at the
//! repository root.

mod certs;
mod config;
mod header;
mod message;
mod packet;
mod tag;

pub use certs::{decode_crt, encode_crt, CertificateChain, CrtEncoding, CrtPayload};
pub use config::ServerConfig;
pub use header::{
    ConnectionId, PacketNumber, PacketNumberWidth, PublicHeader, FLAG_CONNECTION_ID, FLAG_RESET, FLAG_VERSION,
};
pub use message::{decode_handshake_message, decode_prefix, encode_handshake_message, HandshakeMessage};
pub use packet::{
    build_chlo, build_probe_chlo, decode_client_packet, decode_server_response, min_probe_len, HandshakePacket,
    PublicResetPacket, ServerResponse, VersionNegotiationPacket, DEFAULT_PAD_TO, MAX_PAD_TO,
};
pub use tag::{
    make_unsupported_version, tags, ParseVersionError, Tag, VersionTag, DEFAULT_CLIENT_VERSION,
    DEFAULT_PROBE_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("input truncated")]
    Truncated,
    #[error("handshake entries are not in strictly ascending tag order")]
    UnsortedTags,
    #[error("value end offsets decrease")]
    NonMonotonicOffsets,
    #[error("unrecognized layout: {0}")]
    UnknownLayout(&'static str),
    #[error("value region exceeds 2^32-1 octets")]
    OversizeValue,
    #[error("more than 65535 entries")]
    TooManyEntries,
    #[error("packet number does not fit its declared width")]
    PacketNumberOverflow,
    #[error("version negotiation needs at least one version")]
    EmptyVersionList,
    #[error("mandatory fields need {needed} octets but pad target is {pad_to}")]
    PadTooSmall { needed: usize, pad_to: usize },
    #[error("pad target {0} exceeds the 1350-octet cap")]
    PadTooLarge(usize),
    #[error("invalid server config: {0}")]
    InvalidConfig(&'static str),
    #[error("bad certificate blob: {0}")]
    BadCertificateBlob(&'static str),
}
