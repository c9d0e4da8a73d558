//! Probe verdicts against every scripted responder behavior.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::CampaignError;
use crate::handshake::{perform_handshake, HandshakeParams, HandshakeStatus};
use crate::mock::{serve, serve_routes, Behavior, ProfileRoutes, ResponderProfile};
use crate::probe::{scan_targets, ProbeOutcome, ProbeTarget, ScanConfig, Verdict};
use crate::wire::{tags, CertificateChain, ServerConfig, VersionTag, DEFAULT_PROBE_VERSION};

const Q035: VersionTag = VersionTag(*b"Q035");
const Q039: VersionTag = VersionTag(*b"Q039");

/// One responder behavior, probed with a version the responder either
/// lacks (the usual probe) or supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MatrixCell {
    pub behavior: Behavior,
    pub overlap: bool,
    pub expected: Verdict,
}

impl MatrixCell {
    pub fn capable(&self) -> bool {
        matches!(self.expected, Verdict::VersionNegotiation | Verdict::PublicReset)
    }

    fn probe_version(&self) -> VersionTag {
        if self.overlap {
            Q035
        } else {
            DEFAULT_PROBE_VERSION
        }
    }

    pub fn profile(&self) -> ResponderProfile {
        let mut p = ResponderProfile::with_behavior(self.behavior);
        p.supported_versions = vec![Q035, Q039];
        p.scfg = Some(selftest_scfg());
        p
    }

    /// Whether `o` is exactly what the scripted behavior produces.
    pub fn accepts(&self, o: &ProbeOutcome) -> bool {
        if o.verdict != self.expected || o.quic_capable() != self.capable() {
            return false;
        }
        match o.verdict {
            Verdict::VersionNegotiation => o.cid_echo_matched && o.versions == [Q035, Q039],
            Verdict::PublicReset => o.cid_echo_matched && o.reset_body_valid == Some(true),
            _ => true,
        }
    }
}

/// Five behaviors, each without and with version overlap. A handshake
/// reply to a probe is not a capability signal.
pub fn behavior_matrix() -> Vec<MatrixCell> {
    let mut cells = Vec::new();
    for behavior in Behavior::ALL {
        for overlap in [false, true] {
            let expected = match (behavior, overlap) {
                (Behavior::Negotiate | Behavior::ServeRej, false) => Verdict::VersionNegotiation,
                (Behavior::Negotiate | Behavior::ServeRej, true) => Verdict::Malformed,
                (Behavior::Reset, _) => Verdict::PublicReset,
                (Behavior::Silent, _) => Verdict::Timeout,
                (Behavior::Malformed, _) => Verdict::Malformed,
            };
            cells.push(MatrixCell { behavior, overlap, expected });
        }
    }
    cells
}

fn selftest_scfg() -> ServerConfig {
    ServerConfig {
        scid: *b"quic-recon-test!",
        kexs: vec![tags::C255],
        aead: vec![tags::AESG],
        pubs: vec![vec![7; 32]],
        expy: 1_900_000_000,
        vers: vec![Q035, Q039],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: String,
    pub trials: usize,
    pub matched: usize,
    pub elapsed_ms: u64,
}

impl CellResult {
    pub fn passed(&self) -> bool {
        self.trials > 0 && self.matched == self.trials
    }
}

/// Runs `trials` probes against one cell, each to its own responder socket.
pub fn run_cell(cell: &MatrixCell, trials: usize, timeout: Duration) -> Result<CellResult, CampaignError> {
    let started = Instant::now();
    let loopback: SocketAddr = "127.0.0.1:0".parse().expect("literal");
    let mut mock = serve_routes(ProfileRoutes::single(cell.profile()), &vec![loopback; trials])
        .map_err(|e| CampaignError::Selftest(e.to_string()))?;
    let targets: Vec<ProbeTarget> = mock.local_addrs().iter().map(|a| ProbeTarget::from(*a)).collect();
    let cfg = ScanConfig { rate: 50_000, timeout, probe_version: cell.probe_version(), ..ScanConfig::default() };
    let mut outcomes: HashMap<ProbeTarget, ProbeOutcome> = HashMap::new();
    scan_targets(targets.iter().copied(), &cfg, |t, o| {
        outcomes.insert(t, o);
    })?;
    mock.shutdown();
    let matched = targets.iter().filter(|t| outcomes.get(t).is_some_and(|o| cell.accepts(o))).count();
    Ok(CellResult {
        cell: format!("{} {}", snake(&cell.behavior), if cell.overlap { "overlap" } else { "disjoint" }),
        trials,
        matched,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

fn snake(b: &Behavior) -> String {
    match serde_json::to_value(b) {
        Ok(serde_json::Value::String(s)) => s,
        _ => format!("{b:?}"),
    }
}

/// Handshakes against a REJ-serving responder must return its config and
/// certificate bytes unchanged.
pub fn run_handshake_cell(trials: usize, timeout: Duration) -> Result<CellResult, CampaignError> {
    let started = Instant::now();
    let mut profile = MatrixCell { behavior: Behavior::ServeRej, overlap: true, expected: Verdict::Malformed }.profile();
    let chain = CertificateChain::new(vec![b"selftest leaf".to_vec(), b"selftest root".to_vec()]);
    profile.cert_inventory.insert("selftest.example".into(), chain.clone());
    let mut mock = serve(profile, "127.0.0.1:0".parse().expect("literal"))
        .map_err(|e| CampaignError::Selftest(e.to_string()))?;
    let addr = ProbeTarget::from(mock.local_addr());
    let params = HandshakeParams { timeout, ..HandshakeParams::with_sni("selftest.example") };
    let mut matched = 0;
    for _ in 0..trials {
        let r = perform_handshake(addr, &params);
        if r.status == HandshakeStatus::QuicEnabled
            && r.scfg.as_ref() == Some(&selftest_scfg())
            && r.certs.as_ref() == Some(&chain)
        {
            matched += 1;
        }
    }
    mock.shutdown();
    Ok(CellResult {
        cell: "serve_rej handshake".into(),
        trials,
        matched,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

/// The whole matrix plus the handshake cell.
pub fn run_selftest(trials: usize, timeout: Duration) -> Result<Vec<CellResult>, CampaignError> {
    let mut out = Vec::new();
    for cell in behavior_matrix() {
        out.push(run_cell(&cell, trials, timeout)?);
    }
    out.push(run_handshake_cell(trials.min(50), timeout)?);
    Ok(out)
}
