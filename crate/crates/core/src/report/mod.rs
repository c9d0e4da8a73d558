//! Aggregations over scan output: operator attribution, version sets and
//! certificate clusters.

mod attribution;
mod certs;
mod versions;

pub use attribution::{
    attribute_host, default_cert_rules, default_rdns_rules, AttributionRecord, HostObservation, NamePattern, Rule,
    RuleSet, UNKNOWN,
};
pub use certs::{cluster_certificates, CertCluster, CertClusterReport};
pub use versions::{aggregate_version_sets, VersionSet, VersionSetSeries, DEFAULT_SET_THRESHOLD};

use std::io::BufRead;

use serde::de::DeserializeOwned;

/// Parses one JSON value per line, skipping blank lines. Returns the parsed
/// values and the number of lines that failed to parse.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(input: R) -> std::io::Result<(Vec<T>, u64)> {
    let mut out = Vec::new();
    let mut bad = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(_) => bad += 1,
        }
    }
    Ok((out, bad))
}
