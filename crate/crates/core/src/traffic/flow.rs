use std::fmt;
use std::io::Read;
use std::net::IpAddr;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Tcp,
    Udp,
    /// Any other IP protocol number.
    Other(u8),
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tcp" | "6" => Ok(Transport::Tcp),
            "udp" | "17" => Ok(Transport::Udp),
            "other" => Ok(Transport::Other(255)),
            n => n.parse::<u8>().map(Transport::Other).map_err(|_| format!("unknown transport {s:?}")),
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::Tcp => f.write_str("tcp"),
            Transport::Udp => f.write_str("udp"),
            Transport::Other(n) => write!(f, "{n}"),
        }
    }
}

/// A flow endpoint: an address, or an AS number when the exporter already
/// anonymized addresses to their origin AS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Addr(IpAddr),
    Asn(u32),
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("AS").or_else(|| s.strip_prefix("as")) {
            return n.parse().map(Endpoint::Asn).map_err(|_| format!("bad AS number {s:?}"));
        }
        s.parse().map(Endpoint::Addr).map_err(|_| format!("bad endpoint {s:?}"))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Addr(a) => write!(f, "{a}"),
            Endpoint::Asn(n) => write!(f, "AS{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub start: DateTime<Utc>,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub transport: Transport,
    pub src_port: u16,
    pub dst_port: u16,
    pub bytes: u64,
    pub packets: u64,
    /// Sampling multiplier for sampled exports; 1 when absent.
    pub sampling: Option<u32>,
}

impl FlowRecord {
    pub fn scaled_bytes(&self) -> u64 {
        self.bytes.saturating_mul(self.sampling.unwrap_or(1) as u64)
    }

    pub fn scaled_packets(&self) -> u64 {
        self.packets.saturating_mul(self.sampling.unwrap_or(1) as u64)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("flow line {line}: {reason}")]
    Invalid { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Deserialize)]
struct Row {
    ts: String,
    src: String,
    dst: String,
    proto: String,
    sport: u16,
    dport: u16,
    bytes: u64,
    packets: u64,
    #[serde(default)]
    sampling: Option<u32>,
}

/// Unix seconds (fractions allowed) or RFC 3339.
fn parse_ts(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    if s.contains('T') {
        return DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc)).map_err(|e| e.to_string());
    }
    let secs: f64 = s.parse().map_err(|_| format!("bad timestamp {s:?}"))?;
    if !secs.is_finite() {
        return Err(format!("bad timestamp {s:?}"));
    }
    DateTime::from_timestamp_millis((secs * 1000.0).round() as i64).ok_or_else(|| format!("timestamp out of range {s:?}"))
}

impl Row {
    fn into_record(self) -> Result<FlowRecord, String> {
        let r = FlowRecord {
            start: parse_ts(&self.ts)?,
            src: self.src.parse()?,
            dst: self.dst.parse()?,
            transport: self.proto.parse()?,
            src_port: self.sport,
            dst_port: self.dport,
            bytes: self.bytes,
            packets: self.packets,
            sampling: self.sampling,
        };
        if matches!(r.transport, Transport::Tcp | Transport::Udp) && !(r.bytes >= r.packets && r.packets >= 1) {
            return Err(format!("need bytes >= packets >= 1, got {} bytes in {} packets", r.bytes, r.packets));
        }
        if r.sampling == Some(0) {
            return Err("sampling multiplier must be positive".into());
        }
        Ok(r)
    }
}

/// Streams flows from CSV with header `ts,src,dst,proto,sport,dport,bytes,packets[,sampling]`.
pub fn read_flows<R: Read>(input: R) -> impl Iterator<Item = Result<FlowRecord, FlowError>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let headers = rdr.headers().cloned();
    let mut records = rdr.into_records();
    let mut failed = false;
    std::iter::from_fn(move || {
        if failed {
            return None;
        }
        let headers = match &headers {
            Ok(h) => h,
            Err(e) => {
                failed = true;
                return Some(Err(FlowError::Invalid { line: 1, reason: e.to_string() }));
            }
        };
        let rec = records.next()?;
        Some(rec.map_err(FlowError::from).and_then(|rec| {
            let line = rec.position().map_or(0, |p| p.line());
            let row: Row = rec.deserialize(Some(headers)).map_err(|e| FlowError::Invalid { line, reason: e.to_string() })?;
            row.into_record().map_err(|reason| FlowError::Invalid { line, reason })
        }))
    })
}
