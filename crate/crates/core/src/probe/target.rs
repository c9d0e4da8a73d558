use std::fmt;
use std::net::{IpAddr, SocketAddr};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::net::canonical;

pub const DEFAULT_PORT: u16 = 443;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProbeTarget {
    pub address: IpAddr,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TargetParseError {
    #[error("invalid target {0:?}")]
    Syntax(String),
    #[error("port must be in 1..=65535 in {0:?}")]
    Port(String),
}

impl ProbeTarget {
    pub fn new(address: IpAddr, port: u16) -> Result<ProbeTarget, TargetParseError> {
        if port == 0 {
            return Err(TargetParseError::Port(format!("{address}:0")));
        }
        Ok(ProbeTarget { address: canonical(address), port })
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.address, self.port)
    }
}

impl From<SocketAddr> for ProbeTarget {
    fn from(s: SocketAddr) -> Self {
        ProbeTarget { address: canonical(s.ip()), port: s.port() }
    }
}

impl fmt::Display for ProbeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.socket_addr())
    }
}

impl FromStr for ProbeTarget {
    type Err = TargetParseError;

    /// Accepts `addr`, `v4:port`, `[v6]:port` and bare IPv6 addresses.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(ip) = s.parse::<IpAddr>() {
            return ProbeTarget::new(ip, DEFAULT_PORT);
        }
        if let Ok(sa) = s.parse::<SocketAddr>() {
            return ProbeTarget::new(sa.ip(), sa.port());
        }
        match s.rsplit_once(':') {
            Some((_, p)) if p.parse::<u32>().is_ok() => Err(TargetParseError::Port(s.to_string())),
            _ => Err(TargetParseError::Syntax(s.to_string())),
        }
    }
}

/// Parses a target list: one `address[:port]` per line, `#` comments.
///
/// Lazily yields one result per non-empty line so huge lists stream.
pub fn parse_target_lines<R: std::io::BufRead>(
    reader: R,
) -> impl Iterator<Item = Result<ProbeTarget, TargetParseError>> {
    reader.lines().filter_map(|line| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(TargetParseError::Syntax(e.to_string()))),
        };
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            None
        } else {
            Some(body.parse())
        }
    })
}
