use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::traffic::{OperatorMap, PrefixMap};

/// Operator of hosts no rule claims.
pub const UNKNOWN: &str = "unknown";

/// Case-insensitive name pattern: exact, `*suffix`, `prefix*`, or `*`.
/// `*.example.com` matches names at any depth below example.com.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamePattern(String);

impl NamePattern {
    pub fn matches(&self, name: &str) -> bool {
        let name = name.trim_end_matches('.').to_ascii_lowercase();
        let p = self.0.as_str();
        if p == "*" {
            return true;
        }
        match (p.strip_prefix('*'), p.strip_suffix('*')) {
            (Some(suffix), _) => name.len() > suffix.len() && name.ends_with(suffix),
            (None, Some(prefix)) => name.starts_with(prefix),
            (None, None) => name == p,
        }
    }
}

impl FromStr for NamePattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p = s.trim().trim_end_matches('.').to_ascii_lowercase();
        let inner = p.trim_start_matches('*').trim_end_matches('*');
        if p.is_empty() || inner.contains('*') || (p.len() > 1 && p.starts_with('*') && p.ends_with('*')) {
            return Err(format!("unsupported pattern {s:?}"));
        }
        Ok(NamePattern(p))
    }
}

impl fmt::Display for NamePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub pattern: NamePattern,
    pub operator: String,
}

/// Ordered rules; the first match wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet(pub Vec<Rule>);

impl RuleSet {
    /// One `pattern operator` pair per line. A pattern containing spaces is
    /// written in double quotes. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<RuleSet, String> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (pat, rest) = match line.strip_prefix('"') {
                Some(q) => q.split_once('"').ok_or_else(|| format!("rule line {}: unterminated quote", i + 1))?,
                None => line.split_once(char::is_whitespace).unwrap_or((line, "")),
            };
            let operator = rest.trim();
            if operator.is_empty() || operator.contains(char::is_whitespace) {
                return Err(format!("rule line {}: expected `pattern operator`", i + 1));
            }
            let pattern = pat.parse().map_err(|e| format!("rule line {}: {e}", i + 1))?;
            rules.push(Rule { pattern, operator: operator.to_string() });
        }
        Ok(RuleSet(rules))
    }

    pub fn first_match<'a, I>(&self, names: I) -> Option<&str>
    where
        I: IntoIterator<Item = &'a str> + Clone,
    {
        self.0.iter().find(|r| names.clone().into_iter().any(|n| r.pattern.matches(n))).map(|r| r.operator.as_str())
    }
}

pub fn default_rdns_rules() -> RuleSet {
    RuleSet::parse(include_str!("../../rules/rdns.rules")).expect("bundled rdns rules parse")
}

pub fn default_cert_rules() -> RuleSet {
    RuleSet::parse(include_str!("../../rules/cert.rules")).expect("bundled cert rules parse")
}

/// What is known about one host before attribution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostObservation {
    pub address: Option<IpAddr>,
    /// Origin AS when already known; otherwise looked up from the address.
    #[serde(default)]
    pub asn: Option<u32>,
    #[serde(default)]
    pub rdns_name: Option<String>,
    #[serde(default)]
    pub cert_fingerprint: Option<String>,
    /// Names the leaf certificate carries.
    #[serde(default)]
    pub cert_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub address: Option<IpAddr>,
    pub asn: Option<u32>,
    pub rdns_name: Option<String>,
    pub cert_fingerprint: Option<String>,
    pub operator: String,
}

/// Names the operator of a host: by AS first, then by certificate rule,
/// then by reverse-DNS rule, else [`UNKNOWN`].
pub fn attribute_host(
    obs: &HostObservation,
    prefixes: &PrefixMap,
    operators: &OperatorMap,
    rdns_rules: &RuleSet,
    cert_rules: &RuleSet,
) -> AttributionRecord {
    let asn = obs.asn.or_else(|| obs.address.and_then(|a| prefixes.lookup(a)));
    let operator = asn
        .and_then(|a| operators.operator_of(a))
        .or_else(|| cert_rules.first_match(obs.cert_names.iter().map(String::as_str)))
        .or_else(|| rdns_rules.first_match(obs.rdns_name.as_deref()))
        .unwrap_or(UNKNOWN)
        .to_string();
    AttributionRecord {
        address: obs.address,
        asn,
        rdns_name: obs.rdns_name.clone(),
        cert_fingerprint: obs.cert_fingerprint.clone(),
        operator,
    }
}
