//! Synthetic grab and probe outputs for the aggregation tests.

use std::collections::BTreeMap;

use quic_recon::handshake::{HandshakeRecord, HandshakeStatus};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Host counts of 320 certificates over 617 590 hosts: the five largest
/// cover 589 243 hosts, the ten largest 613 143, and 310 small ones share
/// the remaining 4 447.
pub fn cert_distribution() -> Vec<u64> {
    let mut d = vec![330_000, 220_000, 14_000, 13_000, 12_243, 5_000, 4_900, 4_800, 4_700, 4_500];
    d.extend(std::iter::repeat(15).take(107));
    d.extend(std::iter::repeat(14).take(203));
    d
}

pub fn grab_record(fingerprint: Option<String>, cn: &str) -> HandshakeRecord {
    HandshakeRecord {
        host: "192.0.2.1".into(),
        sni: "foo.com".into(),
        status: HandshakeStatus::QuicEnabled,
        version: None,
        scid_hex: None,
        cert_fingerprints: fingerprint.into_iter().collect(),
        cert_cn: Some(cn.into()),
        cert_names: vec![],
        cert_valid: None,
        rtt_ms: None,
    }
}

/// One grab record per host, certificates interleaved round-robin.
pub fn cert_hosts(dist: &[u64]) -> impl Iterator<Item = HandshakeRecord> + '_ {
    let longest = dist.iter().copied().max().unwrap_or(0);
    (0..longest).flat_map(move |round| {
        dist.iter()
            .enumerate()
            .filter(move |(_, n)| round < **n)
            .map(|(i, _)| grab_record(Some(format!("{i:064x}")), &format!("cert{i}.example")))
    })
}

pub fn probe_line(addr: std::net::Ipv4Addr, verdict: &str, versions: &[&str]) -> String {
    serde_json::json!({
        "addr": addr.to_string(), "port": 443, "verdict": verdict, "versions": versions,
        "rtt_ms": 3.5, "ts": "2017-10-01T00:00:00Z"
    })
    .to_string()
}

pub const POOL: [&str; 6] = ["Q035", "Q036", "Q037", "Q038", "Q039", "Q043"];

/// Random host lines for one date plus the expected per-set counts.
pub fn scan_day(rng: &mut StdRng, hosts: u32) -> (Vec<String>, BTreeMap<Vec<String>, u64>) {
    let mut lines = Vec::new();
    let mut want: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for i in 0..hosts {
        let addr = std::net::Ipv4Addr::from(0x0a00_0000 + i);
        match rng.gen_range(0..10) {
            0 => lines.push(probe_line(addr, "timeout", &[])),
            1 => {
                lines.push(probe_line(addr, "public_reset", &[]));
                *want.entry(vec![]).or_default() += 1;
            }
            _ => {
                let k = rng.gen_range(1..=POOL.len());
                let mut vs: Vec<&str> = POOL.choose_multiple(rng, k).copied().collect();
                lines.push(probe_line(addr, "version_negotiation", &vs));
                vs.sort();
                *want.entry(vs.iter().map(|s| s.to_string()).collect()).or_default() += 1;
            }
        }
    }
    (lines, want)
}

/// Record order and each record's version list shuffled.
pub fn shuffled_day<R: Rng>(lines: &[String], rng: &mut R) -> Vec<String> {
    let mut out: Vec<String> = lines
        .iter()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["versions"].as_array_mut().unwrap().shuffle(rng);
            v.to_string()
        })
        .collect();
    out.shuffle(rng);
    out
}
