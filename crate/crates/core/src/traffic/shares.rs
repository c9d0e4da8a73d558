use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat};
use serde::{Deserialize, Serialize};

use super::flow::FlowRecord;
use super::prefix::Attribution;
use super::{classify_flow, Protocol};

/// Flow exports are aggregated to five-minute bins.
pub const DEFAULT_BIN: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Bytes,
    Packets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareOptions {
    #[serde(with = "crate::util::secs")]
    pub bin: Duration,
    pub weighting: Weighting,
}

impl Default for ShareOptions {
    fn default() -> Self {
        ShareOptions { bin: DEFAULT_BIN, weighting: Weighting::Bytes }
    }
}

/// Weighted totals per time bin, operator and protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareReport {
    pub options: ShareOptions,
    /// Operators in output order, "other" included.
    pub operators: Vec<String>,
    /// Bin key (start / bin, floored) → operator → totals indexed like
    /// [`Protocol::ALL`].
    pub bins: BTreeMap<i64, BTreeMap<String, [u64; 4]>>,
}

/// The three share views over some set of cells. Shares whose
/// denominator is zero are absent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareMatrices {
    pub total: u64,
    pub protocol_totals: BTreeMap<Protocol, u64>,
    /// Protocol bytes over all bytes, Other traffic included.
    pub overall_share: BTreeMap<Protocol, f64>,
    /// Per operator, each web protocol's part of that operator's web bytes.
    pub operator_share: BTreeMap<String, BTreeMap<Protocol, f64>>,
    /// Per protocol, each operator's part of that protocol's bytes.
    pub share_in_protocol: BTreeMap<Protocol, BTreeMap<String, f64>>,
}

fn idx(p: Protocol) -> usize {
    p as usize
}

fn ratio(a: u64, b: u64) -> f64 {
    a as f64 / b as f64
}

impl ShareMatrices {
    pub fn from_cells(cells: &BTreeMap<String, [u64; 4]>) -> ShareMatrices {
        let mut protocol_totals = BTreeMap::new();
        for p in Protocol::ALL {
            protocol_totals.insert(p, cells.values().map(|c| c[idx(p)]).sum::<u64>());
        }
        let total: u64 = protocol_totals.values().sum();
        let mut m = ShareMatrices {
            total,
            protocol_totals,
            overall_share: BTreeMap::new(),
            operator_share: BTreeMap::new(),
            share_in_protocol: BTreeMap::new(),
        };
        if total > 0 {
            for (p, b) in &m.protocol_totals {
                m.overall_share.insert(*p, ratio(*b, total));
            }
        }
        for (op, c) in cells {
            let web: u64 = Protocol::WEB.iter().map(|p| c[idx(*p)]).sum();
            if web > 0 {
                m.operator_share.insert(op.clone(), Protocol::WEB.iter().map(|p| (*p, ratio(c[idx(*p)], web))).collect());
            }
        }
        for (p, b) in &m.protocol_totals {
            if *b > 0 {
                let row = cells.iter().map(|(op, c)| (op.clone(), ratio(c[idx(*p)], *b))).collect();
                m.share_in_protocol.insert(*p, row);
            }
        }
        m
    }
}

impl ShareReport {
    pub fn new(options: ShareOptions, operators: Vec<String>) -> ShareReport {
        ShareReport { options, operators, bins: BTreeMap::new() }
    }

    fn bin_ms(&self) -> i64 {
        (self.options.bin.as_millis() as i64).max(1)
    }

    pub fn bin_key(&self, f: &FlowRecord) -> i64 {
        f.start.timestamp_millis().div_euclid(self.bin_ms())
    }

    pub fn bin_start(&self, key: i64) -> DateTime<chrono::Utc> {
        DateTime::from_timestamp_millis(key.saturating_mul(self.bin_ms())).unwrap_or(DateTime::<chrono::Utc>::MAX_UTC)
    }

    /// Adds `weight` to one cell.
    pub fn record(&mut self, bin: i64, operator: &str, protocol: Protocol, weight: u64) {
        let ops = self.bins.entry(bin).or_default();
        let cell = match ops.get_mut(operator) {
            Some(c) => c,
            None => ops.entry(operator.to_string()).or_default(),
        };
        cell[idx(protocol)] += weight;
        if !self.operators.iter().any(|o| o == operator) {
            self.operators.push(operator.to_string());
        }
    }

    pub fn add(&mut self, f: &FlowRecord, attr: &Attribution) {
        let w = match self.options.weighting {
            Weighting::Bytes => f.scaled_bytes(),
            Weighting::Packets => f.scaled_packets(),
        };
        let bin = self.bin_key(f);
        self.record(bin, attr.attribute(f), classify_flow(f), w);
    }

    /// Cell-wise sum. Merging is commutative and associative, so any split
    /// of the input gives the same report.
    pub fn merge(&mut self, other: &ShareReport) {
        for (bin, ops) in &other.bins {
            for (op, c) in ops {
                for p in Protocol::ALL {
                    if c[idx(p)] > 0 {
                        self.record(*bin, op, p, c[idx(p)]);
                    }
                }
                self.bins.entry(*bin).or_default().entry(op.clone()).or_default();
            }
        }
        for op in &other.operators {
            if !self.operators.contains(op) {
                self.operators.push(op.clone());
            }
        }
    }

    /// Totals over all bins.
    pub fn totals(&self) -> BTreeMap<String, [u64; 4]> {
        let mut out: BTreeMap<String, [u64; 4]> = self.operators.iter().map(|o| (o.clone(), [0; 4])).collect();
        for ops in self.bins.values() {
            for (op, c) in ops {
                let t = out.entry(op.clone()).or_default();
                for i in 0..4 {
                    t[i] += c[i];
                }
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.bins.values().flat_map(|ops| ops.values()).flat_map(|c| c.iter()).sum()
    }

    pub fn matrices(&self) -> ShareMatrices {
        ShareMatrices::from_cells(&self.totals())
    }

    pub fn bin_matrices(&self, bin: i64) -> Option<ShareMatrices> {
        self.bins.get(&bin).map(ShareMatrices::from_cells)
    }
}

pub fn compute_shares<I>(flows: I, attr: &Attribution, options: ShareOptions) -> ShareReport
where
    I: IntoIterator,
    I::Item: Borrow<FlowRecord>,
{
    let mut r = ShareReport::new(options, attr.operator_names());
    for f in flows {
        r.add(f.borrow(), attr);
    }
    r
}

/// Same result as [`compute_shares`], folding chunks on `workers` threads.
pub fn compute_shares_parallel(
    flows: &[FlowRecord],
    attr: &Attribution,
    options: ShareOptions,
    workers: usize,
) -> ShareReport {
    let workers = workers.max(1);
    let chunk = flows.len().div_ceil(workers).max(1);
    let parts: Vec<ShareReport> = std::thread::scope(|s| {
        let handles: Vec<_> =
            flows.chunks(chunk).map(|c| s.spawn(move || compute_shares(c, attr, options))).collect();
        handles.into_iter().map(|h| h.join().expect("share worker panicked")).collect()
    });
    let mut out = ShareReport::new(options, attr.operator_names());
    for p in &parts {
        out.merge(p);
    }
    out
}

/// Long-format CSV `bin_start,protocol,operator,bytes,overall_share`: one row
/// per bin, protocol and operator plus an "all" row per protocol. The
/// share is the cell's part of all traffic in its bin.
pub fn emit_timeseries<W: Write>(r: &ShareReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_start", "protocol", "operator", "bytes", "overall_share"])?;
    for (key, ops) in &r.bins {
        let start = r.bin_start(*key).to_rfc3339_opts(SecondsFormat::Secs, true);
        let total: u64 = ops.values().flat_map(|c| c.iter()).sum();
        for p in Protocol::ALL {
            let mut row = |op: &str, b: u64| {
                let share = if total > 0 { ratio(b, total).to_string() } else { String::new() };
                w.write_record([start.as_str(), p.as_str(), op, &b.to_string(), &share])
            };
            for op in &r.operators {
                row(op, ops.get(op).map_or(0, |c| c[idx(p)]))?;
            }
            row("all", ops.values().map(|c| c[idx(p)]).sum())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Whole-period summary: per protocol and operator, the bytes and the three
/// shares. Undefined shares are left empty.
pub fn write_share_table<W: Write>(r: &ShareReport, out: W) -> csv::Result<()> {
    let m = r.matrices();
    let totals = r.totals();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["protocol", "operator", "bytes", "overall_share", "operator_share", "share_in_protocol"])?;
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for p in Protocol::ALL {
        let pb = m.protocol_totals[&p];
        w.write_record([
            p.as_str(),
            "all",
            &pb.to_string(),
            &fmt(m.overall_share.get(&p).copied()),
            "",
            &fmt((pb > 0).then_some(1.0)),
        ])?;
        for op in &r.operators {
            let b = totals.get(op).map_or(0, |c| c[idx(p)]);
            w.write_record([
                p.as_str(),
                op.as_str(),
                &b.to_string(),
                &fmt((m.total > 0).then(|| ratio(b, m.total))),
                &fmt(m.operator_share.get(op).and_then(|s| s.get(&p)).copied()),
                &fmt(m.share_in_protocol.get(&p).and_then(|s| s.get(op)).copied()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
