use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::net::IpAddr;

use chrono::NaiveDate;
use serde::Serialize;

use crate::probe::{ProbeRecord, Verdict};
use crate::wire::VersionTag;

/// Sets supported by fewer hosts than this on every date fold into "other".
pub const DEFAULT_SET_THRESHOLD: u64 = 20_000;

/// A host's advertised versions, sorted and deduplicated. Hosts that
/// answered with a public reset advertise nothing and form the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VersionSet {
    Versions(Vec<VersionTag>),
    Other,
}

impl VersionSet {
    pub fn canonical(versions: &[VersionTag]) -> VersionSet {
        let set: BTreeSet<VersionTag> = versions.iter().copied().collect();
        VersionSet::Versions(set.into_iter().collect())
    }
}

impl Serialize for VersionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl fmt::Display for VersionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionSet::Other => f.write_str("other"),
            VersionSet::Versions(v) if v.is_empty() => f.write_str("none"),
            VersionSet::Versions(v) => {
                let names: Vec<String> = v.iter().map(|t| t.to_string()).collect();
                f.write_str(&names.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VersionSetSeries {
    pub dates: BTreeMap<NaiveDate, BTreeMap<VersionSet, u64>>,
    /// Input lines that were not probe records.
    pub malformed: u64,
}

impl VersionSetSeries {
    /// QUIC-capable hosts on a date.
    pub fn hosts(&self, date: NaiveDate) -> u64 {
        self.dates.get(&date).map_or(0, |m| m.values().sum())
    }

    /// CSV `date,version_set,hosts`, sets in canonical order.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "version_set", "hosts"])?;
        for (date, sets) in &self.dates {
            for (set, n) in sets {
                w.write_record([date.to_string(), set.to_string(), n.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Counts hosts per canonical version set for each dated probe output.
/// Only QUIC-capable hosts count. An address seen twice on one date counts
/// once, with the union of its versions. With a threshold, a set that never
/// reaches it on any date is folded into [`VersionSet::Other`].
pub fn aggregate_version_sets<R: BufRead>(
    inputs: Vec<(NaiveDate, R)>,
    threshold: Option<u64>,
) -> std::io::Result<VersionSetSeries> {
    let mut per_date: BTreeMap<NaiveDate, HashMap<IpAddr, BTreeSet<VersionTag>>> = BTreeMap::new();
    let mut malformed = 0;
    for (date, input) in inputs {
        let (records, bad) = super::read_jsonl::<ProbeRecord, _>(input)?;
        malformed += bad;
        let hosts = per_date.entry(date).or_default();
        for r in records {
            match r.verdict {
                Verdict::VersionNegotiation | Verdict::PublicReset => {
                    hosts.entry(r.addr).or_default().extend(r.versions.iter().copied());
                }
                Verdict::Timeout | Verdict::Malformed => {}
            }
        }
    }

    let mut series = VersionSetSeries { dates: BTreeMap::new(), malformed };
    for (date, hosts) in per_date {
        let counts = series.dates.entry(date).or_default();
        for versions in hosts.into_values() {
            *counts.entry(VersionSet::Versions(versions.into_iter().collect())).or_default() += 1;
        }
    }
    if let Some(t) = threshold {
        let keep: BTreeSet<VersionSet> = series
            .dates
            .values()
            .flat_map(|m| m.iter())
            .filter(|(_, n)| **n >= t)
            .map(|(s, _)| s.clone())
            .collect();
        for counts in series.dates.values_mut() {
            let mut folded = BTreeMap::new();
            for (set, n) in std::mem::take(counts) {
                let key = if keep.contains(&set) { set } else { VersionSet::Other };
                *folded.entry(key).or_default() += n;
            }
            *counts = folded;
        }
    }
    Ok(series)
}
