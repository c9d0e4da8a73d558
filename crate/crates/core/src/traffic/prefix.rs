use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::net::IpAddr;

use super::flow::{Endpoint, FlowRecord};
use crate::net::{addr_bits, canonical, IpPrefix, PrefixSet};

/// Operator name for traffic no configured operator owns.
pub const OTHER: &str = "other";

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    child: [u32; 2],
    asn: Option<u32>,
}

impl Node {
    const EMPTY: Node = Node { child: [NONE, NONE], asn: None };
}

/// Longest-prefix match from addresses to origin AS, as a binary trie per
/// address family.
#[derive(Debug, Clone)]
pub struct PrefixMap {
    nodes: Vec<Node>,
    roots: [u32; 2],
    entries: BTreeMap<IpPrefix, u32>,
}

impl Default for PrefixMap {
    fn default() -> Self {
        PrefixMap { nodes: vec![Node::EMPTY, Node::EMPTY], roots: [0, 1], entries: BTreeMap::new() }
    }
}

fn family(ip: IpAddr) -> usize {
    usize::from(ip.is_ipv6())
}

fn bit(bits: u128, i: u8) -> usize {
    ((bits >> (127 - i as u32)) & 1) as usize
}

impl PrefixMap {
    pub fn new() -> PrefixMap {
        PrefixMap::default()
    }

    /// Maps `prefix` to `asn`, replacing any earlier mapping of the same prefix.
    pub fn insert(&mut self, prefix: IpPrefix, asn: u32) {
        let (bits, _) = prefix.bits();
        let mut at = self.roots[family(prefix.addr())];
        for i in 0..prefix.prefix_len() {
            let b = bit(bits, i);
            let next = self.nodes[at as usize].child[b];
            at = if next == NONE {
                self.nodes.push(Node::EMPTY);
                let n = (self.nodes.len() - 1) as u32;
                self.nodes[at as usize].child[b] = n;
                n
            } else {
                next
            };
        }
        self.nodes[at as usize].asn = Some(asn);
        self.entries.insert(prefix, asn);
    }

    /// The most specific covering prefix and its AS, if any.
    pub fn lookup_prefix(&self, ip: IpAddr) -> Option<(IpPrefix, u32)> {
        let ip = canonical(ip);
        let (bits, width) = addr_bits(ip);
        let mut at = self.roots[family(ip)];
        let mut best = self.nodes[at as usize].asn.map(|a| (0, a));
        for i in 0..width {
            at = self.nodes[at as usize].child[bit(bits, i)];
            if at == NONE {
                break;
            }
            if let Some(a) = self.nodes[at as usize].asn {
                best = Some((i + 1, a));
            }
        }
        best.map(|(len, asn)| (IpPrefix::new(ip, len).expect("length within family"), asn))
    }

    pub fn lookup(&self, ip: IpAddr) -> Option<u32> {
        self.lookup_prefix(ip).map(|(_, a)| a)
    }

    pub fn entries(&self) -> impl Iterator<Item = (IpPrefix, u32)> + '_ {
        self.entries.iter().map(|(p, a)| (*p, *a))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads `prefix,asn` CSV. A header row, `#` comments and `AS`-prefixed
    /// numbers are accepted.
    pub fn from_csv<R: Read>(input: R) -> Result<PrefixMap, String> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
        let mut map = PrefixMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let (Some(p), Some(a)) = (rec.get(0), rec.get(1)) else {
                return Err(format!("prefix map row {}: expected prefix,asn", i + 1));
            };
            if i == 0 && p.eq_ignore_ascii_case("prefix") {
                continue;
            }
            let prefix: IpPrefix = p.parse().map_err(|e| format!("prefix map row {}: {e}", i + 1))?;
            let asn = a
                .trim_start_matches("AS")
                .parse::<u32>()
                .map_err(|_| format!("prefix map row {}: bad AS number {a:?}", i + 1))?;
            map.insert(prefix, asn);
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OperatorMapError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("AS{asn} assigned to both {first} and {second}")]
    Overlap { asn: u32, first: String, second: String },
}

/// Operator names and the AS numbers each one owns. No AS belongs to two
/// operators.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OperatorMap {
    owners: HashMap<u32, String>,
    names: BTreeSet<String>,
}

impl OperatorMap {
    pub fn new() -> OperatorMap {
        OperatorMap::default()
    }

    pub fn add(&mut self, operator: &str, asns: &[u32]) -> Result<(), OperatorMapError> {
        let name = operator.trim().to_string();
        for &asn in asns {
            match self.owners.get(&asn) {
                Some(owner) if *owner != name => {
                    return Err(OperatorMapError::Overlap { asn, first: owner.clone(), second: name })
                }
                _ => {
                    self.owners.insert(asn, name.clone());
                }
            }
        }
        self.names.insert(name);
        Ok(())
    }

    /// Lines of `operator: asn,asn,...`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<OperatorMap, OperatorMapError> {
        let mut m = OperatorMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: String| OperatorMapError::Syntax { line: i + 1, reason };
            let (name, list) = line.split_once(':').ok_or_else(|| syntax("expected operator: asn,...".into()))?;
            if name.trim().is_empty() || name.trim() == OTHER {
                return Err(syntax(format!("invalid operator name {name:?}")));
            }
            let asns = list
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.trim_start_matches("AS").parse::<u32>().map_err(|_| syntax(format!("bad AS number {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            m.add(name, &asns)?;
        }
        Ok(m)
    }

    pub fn operator_of(&self, asn: u32) -> Option<&str> {
        self.owners.get(&asn).map(String::as_str)
    }

    /// Configured operators in name order, without "other".
    pub fn operators(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// Everything needed to name the operator behind a flow.
#[derive(Debug, Clone, Default)]
pub struct Attribution {
    pub prefixes: PrefixMap,
    pub operators: OperatorMap,
    /// The vantage point's own address space.
    pub local: PrefixSet,
    /// The vantage point's own AS numbers, for AS-anonymized endpoints.
    pub local_asns: BTreeSet<u32>,
}

impl Attribution {
    fn is_local(&self, e: &Endpoint) -> bool {
        match e {
            Endpoint::Addr(a) => self.local.contains(*a),
            Endpoint::Asn(n) => self.local_asns.contains(n),
        }
    }

    fn operator_of(&self, e: &Endpoint) -> Option<&str> {
        let asn = match e {
            Endpoint::Addr(a) => self.prefixes.lookup(*a)?,
            Endpoint::Asn(n) => *n,
        };
        self.operators.operator_of(asn)
    }

    /// The operator behind the remote endpoint. With exactly one local
    /// endpoint the other one decides. With none (transit, IXP data) the
    /// source decides if it maps to an operator, else the destination.
    /// Both local, or nothing mapped, gives [`OTHER`].
    pub fn attribute(&self, f: &FlowRecord) -> &str {
        let found = match (self.is_local(&f.src), self.is_local(&f.dst)) {
            (true, true) => None,
            (true, false) => self.operator_of(&f.dst),
            (false, true) => self.operator_of(&f.src),
            (false, false) => self.operator_of(&f.src).or_else(|| self.operator_of(&f.dst)),
        };
        found.unwrap_or(OTHER)
    }

    /// Every operator a report can name, "other" last.
    pub fn operator_names(&self) -> Vec<String> {
        self.operators.operators().map(str::to_string).chain(std::iter::once(OTHER.to_string())).collect()
    }
}
