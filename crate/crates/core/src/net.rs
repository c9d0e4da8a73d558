//! Address helpers shared by the scanners and the traffic analyzer.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid prefix {0:?}")]
pub struct PrefixParseError(pub String);

/// A CIDR prefix. Host bits are cleared on construction.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IpPrefix {
    addr: IpAddr,
    len: u8,
}

impl IpPrefix {
    pub fn new(addr: IpAddr, len: u8) -> Result<IpPrefix, PrefixParseError> {
        let max = max_len(&addr);
        if len > max {
            return Err(PrefixParseError(format!("{addr}/{len}")));
        }
        Ok(IpPrefix { addr: mask(addr, len), len })
    }

    pub fn host(addr: IpAddr) -> IpPrefix {
        IpPrefix { addr, len: max_len(&addr) }
    }

    pub fn addr(&self) -> IpAddr {
        self.addr
    }

    pub fn prefix_len(&self) -> u8 {
        self.len
    }

    pub fn contains(&self, ip: IpAddr) -> bool {
        let ip = canonical(ip);
        match (self.addr, ip) {
            (IpAddr::V4(_), IpAddr::V4(_)) | (IpAddr::V6(_), IpAddr::V6(_)) => mask(ip, self.len) == self.addr,
            _ => false,
        }
    }

    /// Address bits as a left-aligned 128-bit integer plus the family width.
    pub fn bits(&self) -> (u128, u8) {
        addr_bits(self.addr)
    }
}

/// Left-aligned bit representation of an address and its width in bits.
pub fn addr_bits(ip: IpAddr) -> (u128, u8) {
    match ip {
        IpAddr::V4(v4) => ((u32::from(v4) as u128) << 96, 32),
        IpAddr::V6(v6) => (u128::from(v6), 128),
    }
}

/// Maps IPv4-mapped IPv6 addresses back to IPv4.
pub fn canonical(ip: IpAddr) -> IpAddr {
    match ip {
        IpAddr::V6(v6) => match v6.to_ipv4_mapped() {
            Some(v4) => IpAddr::V4(v4),
            None => ip,
        },
        v4 => v4,
    }
}

fn max_len(ip: &IpAddr) -> u8 {
    if ip.is_ipv4() {
        32
    } else {
        128
    }
}

fn mask(ip: IpAddr, len: u8) -> IpAddr {
    match ip {
        IpAddr::V4(v4) => {
            let m = if len == 0 { 0 } else { u32::MAX << (32 - len as u32) };
            IpAddr::V4(Ipv4Addr::from(u32::from(v4) & m))
        }
        IpAddr::V6(v6) => {
            let m = if len == 0 { 0 } else { u128::MAX << (128 - len as u32) };
            IpAddr::V6(Ipv6Addr::from(u128::from(v6) & m))
        }
    }
}

impl FromStr for IpPrefix {
    type Err = PrefixParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || PrefixParseError(s.to_string());
        match s.split_once('/') {
            Some((a, l)) => {
                let addr: IpAddr = a.parse().map_err(|_| err())?;
                let len: u8 = l.parse().map_err(|_| err())?;
                IpPrefix::new(addr, len).map_err(|_| err())
            }
            None => Ok(IpPrefix::host(s.parse().map_err(|_| err())?)),
        }
    }
}

impl fmt::Display for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl fmt::Debug for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IpPrefix({self})")
    }
}

impl Serialize for IpPrefix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IpPrefix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A plain list of prefixes with linear membership tests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrefixSet(pub Vec<IpPrefix>);

impl PrefixSet {
    pub fn contains(&self, ip: IpAddr) -> bool {
        self.0.iter().any(|p| p.contains(ip))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reads one prefix per line; `#` starts a comment.
    pub fn parse_list(text: &str) -> Result<PrefixSet, PrefixParseError> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(PrefixSet)
    }
}

const BOGONS: &[&str] = &[
    "0.0.0.0/8",
    "10.0.0.0/8",
    "100.64.0.0/10",
    "127.0.0.0/8",
    "169.254.0.0/16",
    "172.16.0.0/12",
    "192.0.0.0/24",
    "192.0.2.0/24",
    "192.168.0.0/16",
    "198.18.0.0/15",
    "198.51.100.0/24",
    "203.0.113.0/24",
    "224.0.0.0/4",
    "240.0.0.0/4",
    "::/128",
    "::1/128",
    "100::/64",
    "2001:db8::/32",
    "fc00::/7",
    "fe80::/10",
    "ff00::/8",
];

static BOGON_SET: LazyLock<PrefixSet> =
    LazyLock::new(|| PrefixSet(BOGONS.iter().map(|s| s.parse().expect("static prefix")).collect()));

/// Special-purpose ranges that never identify a public endpoint.
pub fn bogon_prefixes() -> PrefixSet {
    BOGON_SET.clone()
}

/// Which addresses count as routable when picking a probe destination.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressPolicy {
    /// Prefixes exempted from the bogon list (e.g. `127.0.0.0/8` for desk tests).
    #[serde(default)]
    pub allow: PrefixSet,
}

impl AddressPolicy {
    pub fn allow_loopback() -> AddressPolicy {
        AddressPolicy { allow: PrefixSet(vec!["127.0.0.0/8".parse().unwrap(), "::1/128".parse().unwrap()]) }
    }

    pub fn is_routable(&self, ip: IpAddr) -> bool {
        let ip = canonical(ip);
        if self.allow.contains(ip) {
            return true;
        }
        !BOGON_SET.contains(ip)
    }
}
