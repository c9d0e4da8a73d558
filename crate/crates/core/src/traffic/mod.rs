//! Flow classification, operator attribution and protocol shares.

mod flow;
mod pcap;
mod prefix;
mod shares;

pub use flow::{read_flows, Endpoint, FlowError, FlowRecord, Transport};
pub use pcap::{read_pcap, PcapError, DEFAULT_LENGTH_CAP};
pub use prefix::{Attribution, OperatorMap, OperatorMapError, PrefixMap, OTHER};
pub use shares::{
    compute_shares, compute_shares_parallel, emit_timeseries, write_share_table, ShareMatrices, ShareOptions,
    ShareReport, Weighting, DEFAULT_BIN,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "HTTP")]
    Http,
    #[serde(rename = "HTTPS")]
    Https,
    #[serde(rename = "QUIC")]
    Quic,
    #[serde(rename = "Other")]
    Other,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Http, Protocol::Https, Protocol::Quic, Protocol::Other];
    pub const WEB: [Protocol; 3] = [Protocol::Http, Protocol::Https, Protocol::Quic];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Http => "HTTP",
            Protocol::Https => "HTTPS",
            Protocol::Quic => "QUIC",
            Protocol::Other => "Other",
        }
    }

    pub fn is_web(self) -> bool {
        self != Protocol::Other
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// TCP/443 is HTTPS, TCP/80 HTTP, UDP/443 QUIC, matching either port.
/// A TCP flow between 80 and 443 counts as HTTPS.
pub fn classify_flow(f: &FlowRecord) -> Protocol {
    let either = |p: u16| f.src_port == p || f.dst_port == p;
    match f.transport {
        Transport::Tcp if either(443) => Protocol::Https,
        Transport::Tcp if either(80) => Protocol::Http,
        Transport::Udp if either(443) => Protocol::Quic,
        _ => Protocol::Other,
    }
}
