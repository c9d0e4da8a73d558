//! Stateless single-packet QUIC capability prober.
//!
//! Each target receives one client hello offering a version no deployed
//! server accepts. A version negotiation or public reset in reply marks the
//! host QUIC-capable. Probe connection ids are a keyed MAC of the target
//! address, so replies are attributed and validated without per-target state
//! beyond the in-flight window.

mod engine;
mod target;
mod transport;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::net::PrefixSet;
use crate::wire::{VersionTag, DEFAULT_PAD_TO, DEFAULT_PROBE_VERSION};

pub use engine::{cid_for, classify_response, probe_one, scan_targets, ScanStats, Scanner};
pub use target::{parse_target_lines, ProbeTarget, TargetParseError, DEFAULT_PORT};
pub use transport::{Transport, UdpTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    VersionNegotiation,
    PublicReset,
    Timeout,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeOutcome {
    pub verdict: Verdict,
    /// Advertised versions; non-empty only for `VersionNegotiation`.
    pub versions: Vec<VersionTag>,
    /// Whether the reply carried the connection id we derived for the target.
    pub cid_echo_matched: bool,
    /// For public resets: whether the PRST body parsed.
    pub reset_body_valid: Option<bool>,
    pub rtt: Duration,
}

impl ProbeOutcome {
    pub fn timeout(rtt: Duration) -> ProbeOutcome {
        ProbeOutcome { verdict: Verdict::Timeout, versions: Vec::new(), cid_echo_matched: false, reset_body_valid: None, rtt }
    }

    pub fn quic_capable(&self) -> bool {
        matches!(self.verdict, Verdict::VersionNegotiation | Verdict::PublicReset)
    }
}

/// One line of probe output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub addr: std::net::IpAddr,
    pub port: u16,
    pub verdict: Verdict,
    pub versions: Vec<VersionTag>,
    pub rtt_ms: f64,
    pub ts: chrono::DateTime<chrono::Utc>,
    #[serde(default)]
    pub cid_echo_matched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_body_valid: Option<bool>,
}

impl ProbeRecord {
    pub fn new(t: &ProbeTarget, o: &ProbeOutcome, ts: chrono::DateTime<chrono::Utc>) -> ProbeRecord {
        ProbeRecord {
            addr: t.address,
            port: t.port,
            verdict: o.verdict,
            versions: o.versions.clone(),
            rtt_ms: o.rtt.as_secs_f64() * 1000.0,
            ts,
            cid_echo_matched: o.cid_echo_matched,
            reset_body_valid: o.reset_body_valid,
        }
    }

    pub fn quic_capable(&self) -> bool {
        matches!(self.verdict, Verdict::VersionNegotiation | Verdict::PublicReset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    /// Packets per second.
    pub rate: u32,
    #[serde(with = "crate::util::secs")]
    pub timeout: Duration,
    pub retries: u32,
    pub blocklist: PrefixSet,
    pub shuffle: bool,
    pub probe_version: VersionTag,
    pub pad_to: usize,
    /// Key for the connection-id MAC; random per scan when zero.
    pub secret: u64,
    pub sni: Option<String>,
    /// Upper bound on simultaneously outstanding probes.
    pub max_in_flight: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            rate: 1000,
            timeout: Duration::from_secs(12),
            retries: 0,
            blocklist: PrefixSet::default(),
            shuffle: false,
            probe_version: DEFAULT_PROBE_VERSION,
            pad_to: DEFAULT_PAD_TO,
            secret: 0,
            sni: None,
            max_in_flight: 1 << 20,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.rate == 0 {
            return Err(ProbeError::InvalidConfig("rate must be positive".into()));
        }
        if self.timeout.is_zero() {
            return Err(ProbeError::InvalidConfig("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ProbeError::InvalidConfig("max_in_flight must be positive".into()));
        }
        crate::wire::build_probe_chlo(Default::default(), self.probe_version, self.pad_to, self.sni.as_deref())
            .map_err(|e| ProbeError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("target {0} is blocklisted")]
    Blocklisted(ProbeTarget),
    #[error("socket error: {0}")]
    SocketError(#[from] std::io::Error),
    #[error("invalid scan config: {0}")]
    InvalidConfig(String),
}
