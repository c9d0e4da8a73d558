use std::collections::HashMap;
use std::io;
use std::net::{IpAddr, SocketAddr, ToSocketAddrs, UdpSocket};
use std::path::Path;
use std::time::{Duration, Instant};

use hickory_proto::op::{Message, MessageType, OpCode, Query, ResponseCode};
use hickory_proto::rr::{Name, RData, RecordType};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::util::normalize_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionStatus {
    Ok,
    NxDomain,
    ServFail,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRecord {
    pub name: String,
    pub addresses: Vec<IpAddr>,
    pub status: ResolutionStatus,
}

impl DomainRecord {
    /// A successful resolution. An empty address list is reported as
    /// `NxDomain`: the name exists in no form we can probe.
    pub fn resolved(name: &str, addresses: Vec<IpAddr>) -> DomainRecord {
        let status = if addresses.is_empty() { ResolutionStatus::NxDomain } else { ResolutionStatus::Ok };
        DomainRecord { name: name.to_string(), addresses, status }
    }

    pub fn failed(name: &str, status: ResolutionStatus) -> DomainRecord {
        debug_assert_ne!(status, ResolutionStatus::Ok);
        DomainRecord { name: name.to_string(), addresses: Vec::new(), status }
    }
}

pub trait Resolver: Sync {
    fn resolve(&self, name: &str) -> DomainRecord;
}

/// Fixed answers, e.g. from a file of pre-resolved names.
#[derive(Debug, Clone, Default)]
pub struct StaticResolver {
    answers: HashMap<String, DomainRecord>,
}

impl StaticResolver {
    pub fn new() -> StaticResolver {
        StaticResolver::default()
    }

    pub fn insert(&mut self, name: &str, addresses: Vec<IpAddr>) -> &mut Self {
        let n = normalize_name(name);
        self.answers.insert(n.clone(), DomainRecord::resolved(&n, addresses));
        self
    }

    pub fn insert_failure(&mut self, name: &str, status: ResolutionStatus) -> &mut Self {
        let n = normalize_name(name);
        self.answers.insert(n.clone(), DomainRecord::failed(&n, status));
        self
    }

    /// One name per line followed by its addresses, or by one of
    /// `NXDOMAIN`, `SERVFAIL`, `TIMEOUT`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<StaticResolver, String> {
        let mut r = StaticResolver::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            let mut words = line.split_whitespace();
            let Some(name) = words.next() else { continue };
            let rest: Vec<&str> = words.collect();
            match rest.as_slice() {
                ["NXDOMAIN"] => r.insert_failure(name, ResolutionStatus::NxDomain),
                ["SERVFAIL"] => r.insert_failure(name, ResolutionStatus::ServFail),
                ["TIMEOUT"] => r.insert_failure(name, ResolutionStatus::Timeout),
                addrs => {
                    let parsed = addrs
                        .iter()
                        .map(|a| a.parse::<IpAddr>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| format!("line {}: {e}", i + 1))?;
                    r.insert(name, parsed)
                }
            };
        }
        Ok(r)
    }

    pub fn from_file(path: &Path) -> Result<StaticResolver, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        StaticResolver::parse(&text)
    }
}

impl Resolver for StaticResolver {
    fn resolve(&self, name: &str) -> DomainRecord {
        let n = normalize_name(name);
        self.answers.get(&n).cloned().unwrap_or_else(|| DomainRecord::failed(&n, ResolutionStatus::NxDomain))
    }
}

/// The host's stub resolver via `getaddrinfo`. It cannot tell a missing
/// name from a failing server, so every failure is reported as `ServFail`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemResolver;

impl Resolver for SystemResolver {
    fn resolve(&self, name: &str) -> DomainRecord {
        let n = normalize_name(name);
        match (n.as_str(), 0).to_socket_addrs() {
            Ok(addrs) => {
                let mut out: Vec<IpAddr> = Vec::new();
                for a in addrs {
                    if !out.contains(&a.ip()) {
                        out.push(a.ip());
                    }
                }
                DomainRecord::resolved(&n, out)
            }
            Err(_) => DomainRecord::failed(&n, ResolutionStatus::ServFail),
        }
    }
}

/// Queries a recursive resolver directly over UDP for A and AAAA records.
#[derive(Debug, Clone)]
pub struct DnsResolver {
    pub server: SocketAddr,
    pub timeout: Duration,
    pub attempts: u32,
}

impl DnsResolver {
    pub fn new(server: SocketAddr) -> DnsResolver {
        DnsResolver { server, timeout: Duration::from_secs(2), attempts: 2 }
    }

    fn query(&self, name: &Name, rtype: RecordType) -> Result<Message, ResolutionStatus> {
        let bind: SocketAddr = if self.server.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().expect("literal");
        let sock = UdpSocket::bind(bind).map_err(|_| ResolutionStatus::ServFail)?;
        let mut buf = [0u8; 4096];
        for _ in 0..self.attempts.max(1) {
            let id: u16 = rand::thread_rng().gen();
            let mut q = Message::new();
            q.set_id(id)
                .set_message_type(MessageType::Query)
                .set_op_code(OpCode::Query)
                .set_recursion_desired(true)
                .add_query(Query::query(name.clone(), rtype));
            let bytes = q.to_vec().map_err(|_| ResolutionStatus::ServFail)?;
            sock.send_to(&bytes, self.server).map_err(|_| ResolutionStatus::ServFail)?;
            let deadline = Instant::now() + self.timeout;
            loop {
                let left = deadline.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    break;
                }
                sock.set_read_timeout(Some(left)).map_err(|_| ResolutionStatus::ServFail)?;
                match sock.recv_from(&mut buf) {
                    Ok((n, from)) if from == self.server => match Message::from_vec(&buf[..n]) {
                        Ok(m) if m.id() == id && m.message_type() == MessageType::Response => return Ok(m),
                        _ => continue,
                    },
                    Ok(_) => continue,
                    Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => break,
                    Err(_) => return Err(ResolutionStatus::ServFail),
                }
            }
        }
        Err(ResolutionStatus::Timeout)
    }
}

impl Resolver for DnsResolver {
    fn resolve(&self, name: &str) -> DomainRecord {
        let n = normalize_name(name);
        let Ok(qname) = Name::from_ascii(format!("{n}.")) else {
            return DomainRecord::failed(&n, ResolutionStatus::NxDomain);
        };
        let mut addresses = Vec::new();
        for rtype in [RecordType::A, RecordType::AAAA] {
            let resp = match self.query(&qname, rtype) {
                Ok(m) => m,
                Err(status) => return DomainRecord::failed(&n, status),
            };
            match resp.response_code() {
                ResponseCode::NoError => {}
                ResponseCode::NXDomain => return DomainRecord::failed(&n, ResolutionStatus::NxDomain),
                _ => return DomainRecord::failed(&n, ResolutionStatus::ServFail),
            }
            for rec in resp.answers() {
                match rec.data() {
                    Some(RData::A(a)) => addresses.push(IpAddr::V4(a.0)),
                    Some(RData::AAAA(a)) => addresses.push(IpAddr::V6(a.0)),
                    _ => {}
                }
            }
        }
        DomainRecord::resolved(&n, addresses)
    }
}
