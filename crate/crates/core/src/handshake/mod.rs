//! Inchoate gQUIC handshake: CHLO/REJ exchanges up to the point where the
//! server config and certificate chain are known. Key agreement is not
//! attempted.

mod cert;
mod client;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::wire::{
    CertificateChain, HandshakePacket, ServerConfig, ServerResponse, VersionTag, DEFAULT_CLIENT_VERSION,
    DEFAULT_PAD_TO, MAX_PAD_TO,
};

pub use cert::{
    dns_name_matches, fingerprint_certificate, leaf_common_name, leaf_names, load_certificates, validate_certificate, CertError,
    CertVerdict, ValidityPolicy,
};
pub use client::{best_common_version, perform_handshake, perform_handshake_with};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandshakeParams {
    /// Server name sent in SNI; empty for no-SNI mode.
    pub sni: String,
    pub version: VersionTag,
    pub max_rounds: u32,
    /// Versions we are willing to switch to after version negotiation.
    pub accepted_versions: Vec<VersionTag>,
    /// How long to wait for each reply.
    #[serde(with = "crate::util::secs")]
    pub timeout: Duration,
    pub pad_to: usize,
    /// Fixed connection id; random when `None`.
    pub connection_id: Option<u64>,
}

impl Default for HandshakeParams {
    fn default() -> HandshakeParams {
        HandshakeParams {
            sni: String::new(),
            version: DEFAULT_CLIENT_VERSION,
            max_rounds: 3,
            accepted_versions: (30..=39).filter_map(VersionTag::from_number).collect(),
            timeout: Duration::from_secs(12),
            pad_to: DEFAULT_PAD_TO,
            connection_id: None,
        }
    }
}

impl HandshakeParams {
    pub fn with_sni(sni: &str) -> HandshakeParams {
        HandshakeParams { sni: sni.to_string(), ..HandshakeParams::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_rounds == 0 {
            return Err("max_rounds must be at least 1".into());
        }
        if self.pad_to > MAX_PAD_TO {
            return Err(format!("pad_to {} exceeds {MAX_PAD_TO}", self.pad_to));
        }
        if !self.sni.is_empty() && !valid_dns_name(&self.sni) {
            return Err(format!("invalid SNI {:?}", self.sni));
        }
        Ok(())
    }
}

fn valid_dns_name(name: &str) -> bool {
    let name = name.strip_suffix('.').unwrap_or(name);
    name.len() <= 253
        && name.split('.').all(|l| {
            !l.is_empty()
                && l.len() <= 63
                && !l.starts_with('-')
                && !l.ends_with('-')
                && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandshakeStatus {
    QuicEnabled,
    VersionFailed,
    ProtocolError,
    Timeout,
}

impl HandshakeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            HandshakeStatus::QuicEnabled => "quic_enabled",
            HandshakeStatus::VersionFailed => "version_failed",
            HandshakeStatus::ProtocolError => "protocol_error",
            HandshakeStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TracePayload {
    Sent(HandshakePacket),
    Received(ServerResponse),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub direction: Direction,
    /// Offset from the start of the handshake.
    pub elapsed: Duration,
    pub raw: Vec<u8>,
    pub payload: TracePayload,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HandshakeTrace {
    pub events: Vec<TraceEvent>,
}

impl HandshakeTrace {
    pub fn sent(&self) -> impl Iterator<Item = &HandshakePacket> {
        self.events.iter().filter_map(|e| match &e.payload {
            TracePayload::Sent(p) => Some(p),
            TracePayload::Received(_) => None,
        })
    }

    pub fn received(&self) -> impl Iterator<Item = &ServerResponse> {
        self.events.iter().filter_map(|e| match &e.payload {
            TracePayload::Received(r) => Some(r),
            TracePayload::Sent(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeResult {
    pub status: HandshakeStatus,
    /// Why the handshake did not succeed, empty otherwise.
    pub detail: String,
    pub negotiated_version: Option<VersionTag>,
    pub scfg: Option<ServerConfig>,
    pub certs: Option<CertificateChain>,
    pub source_token: Option<Vec<u8>>,
    /// The server sent certificates in a form we cannot expand.
    pub cert_compression_unsupported: bool,
    /// Versions listed in a version negotiation packet, if one arrived.
    pub server_versions: Vec<VersionTag>,
    /// CHLOs sent in the final attempt.
    pub rounds: u32,
    /// Time until the first reply.
    pub rtt: Option<Duration>,
    pub trace: HandshakeTrace,
}

impl HandshakeResult {
    pub fn failed(status: HandshakeStatus, detail: impl Into<String>) -> HandshakeResult {
        HandshakeResult {
            status,
            detail: detail.into(),
            negotiated_version: None,
            scfg: None,
            certs: None,
            source_token: None,
            cert_compression_unsupported: false,
            server_versions: Vec::new(),
            rounds: 0,
            rtt: None,
            trace: HandshakeTrace::default(),
        }
    }
}

/// One line of handshake output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshakeRecord {
    pub host: String,
    pub sni: String,
    pub status: HandshakeStatus,
    pub version: Option<VersionTag>,
    pub scid_hex: Option<String>,
    pub cert_fingerprints: Vec<String>,
    /// Leaf subject common name.
    #[serde(default)]
    pub cert_cn: Option<String>,
    /// See [`leaf_names`].
    #[serde(default)]
    pub cert_names: Vec<String>,
    pub cert_valid: Option<bool>,
    pub rtt_ms: Option<f64>,
}

impl HandshakeRecord {
    pub fn new(host: &str, sni: &str, r: &HandshakeResult, verdict: Option<&CertVerdict>) -> HandshakeRecord {
        use sha2::{Digest, Sha256};
        HandshakeRecord {
            host: host.to_string(),
            sni: sni.to_string(),
            status: r.status,
            version: r.negotiated_version,
            scid_hex: r.scfg.as_ref().map(|c| hex::encode(c.scid)),
            cert_fingerprints: r
                .certs
                .iter()
                .flat_map(|c| c.entries.iter())
                .map(|der| hex::encode(Sha256::digest(der)))
                .collect(),
            cert_cn: r.certs.as_ref().and_then(leaf_common_name),
            cert_names: r.certs.as_ref().map(leaf_names).unwrap_or_default(),
            cert_valid: verdict.map(|v| v.valid),
            rtt_ms: r.rtt.map(|d| d.as_secs_f64() * 1000.0),
        }
    }
}
