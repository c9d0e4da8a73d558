use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use x509_parser::certificate::X509Certificate;
use x509_parser::extensions::GeneralName;
use x509_parser::prelude::FromDer;

use crate::wire::CertificateChain;

/// Longest issuer path followed before giving up.
const MAX_CHAIN_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CertError {
    #[error("certificate {index} is not valid DER: {reason}")]
    ParseError { index: usize, reason: String },
    #[error("trust anchor {index} is not valid DER: {reason}")]
    AnchorParseError { index: usize, reason: String },
    #[error("empty certificate chain")]
    EmptyChain,
    #[error("no certificate found in bundle")]
    EmptyBundle,
    #[error("malformed PEM: {0}")]
    Pem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertVerdict {
    pub valid: bool,
    pub chain_ok: bool,
    pub name_match: bool,
    pub not_expired: bool,
}

impl CertVerdict {
    pub fn new(chain_ok: bool, name_match: bool, not_expired: bool) -> CertVerdict {
        CertVerdict { valid: chain_ok && name_match && not_expired, chain_ok, name_match, not_expired }
    }
}

/// Which checks contribute to `valid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityPolicy {
    /// Chain, name and expiry must all pass.
    Full,
    /// Ignore the chain; name and expiry only.
    NameAndExpiry,
    /// A certificate was presented at all.
    Presence,
}

impl ValidityPolicy {
    pub fn accepts(self, v: &CertVerdict) -> bool {
        match self {
            ValidityPolicy::Full => v.valid,
            ValidityPolicy::NameAndExpiry => v.name_match && v.not_expired,
            ValidityPolicy::Presence => true,
        }
    }
}

fn parse(der: &[u8]) -> Result<X509Certificate<'_>, String> {
    match X509Certificate::from_der(der) {
        Ok((rest, c)) if rest.is_empty() => Ok(c),
        Ok(_) => Err("trailing data after certificate".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Checks a presented chain against a set of trust anchors.
///
/// `chain_ok` holds when signatures lead from the leaf to an anchor, using
/// the chain's other entries as intermediates. A leaf that is itself an
/// anchor counts as chained.
pub fn validate_certificate(
    chain: &CertificateChain,
    sni: &str,
    trust_anchors: &[Vec<u8>],
    now: DateTime<Utc>,
) -> Result<CertVerdict, CertError> {
    if chain.is_empty() {
        return Err(CertError::EmptyChain);
    }
    let certs = chain
        .entries
        .iter()
        .enumerate()
        .map(|(index, d)| parse(d).map_err(|reason| CertError::ParseError { index, reason }))
        .collect::<Result<Vec<_>, _>>()?;
    let anchors = trust_anchors
        .iter()
        .enumerate()
        .map(|(index, d)| parse(d).map_err(|reason| CertError::AnchorParseError { index, reason }))
        .collect::<Result<Vec<_>, _>>()?;

    let leaf = &certs[0];
    let chain_ok = chains_to_anchor(&chain.entries, &certs, trust_anchors, &anchors);
    let name_match = leaf_matches_name(leaf, sni);
    let ts = now.timestamp();
    let validity = leaf.validity();
    let not_expired = validity.not_before.timestamp() <= ts && ts <= validity.not_after.timestamp();
    Ok(CertVerdict::new(chain_ok, name_match, not_expired))
}

fn chains_to_anchor(
    chain_der: &[Vec<u8>],
    certs: &[X509Certificate<'_>],
    anchor_der: &[Vec<u8>],
    anchors: &[X509Certificate<'_>],
) -> bool {
    let mut current = 0usize;
    let mut used = vec![false; certs.len()];
    used[0] = true;
    for _ in 0..MAX_CHAIN_DEPTH {
        if anchor_der.iter().any(|a| a == &chain_der[current]) {
            return true;
        }
        let cur = &certs[current];
        let signed_by = |issuer: &X509Certificate<'_>| {
            issuer.subject() == cur.issuer() && cur.verify_signature(Some(issuer.public_key())).is_ok()
        };
        if anchors.iter().any(signed_by) {
            return true;
        }
        match (0..certs.len()).find(|&i| !used[i] && signed_by(&certs[i])) {
            Some(next) => {
                used[next] = true;
                current = next;
            }
            None => return false,
        }
    }
    false
}

fn leaf_matches_name(leaf: &X509Certificate<'_>, sni: &str) -> bool {
    let Ok(Some(san)) = leaf.subject_alternative_name() else {
        return false;
    };
    san.value.general_names.iter().any(|n| match n {
        GeneralName::DNSName(pattern) => dns_name_matches(pattern, sni),
        _ => false,
    })
}

/// DNS-ID matching: case-insensitive, trailing-dot tolerant, with a
/// wildcard allowed only as the entire left-most label.
pub fn dns_name_matches(pattern: &str, name: &str) -> bool {
    let pattern = pattern.trim_end_matches('.').to_ascii_lowercase();
    let name = name.trim_end_matches('.').to_ascii_lowercase();
    if name.is_empty() || pattern.is_empty() {
        return false;
    }
    match pattern.strip_prefix("*.") {
        Some(suffix) => {
            if suffix.contains('*') || !suffix.contains('.') {
                return false;
            }
            match name.split_once('.') {
                Some((first, rest)) => !first.is_empty() && rest == suffix,
                None => false,
            }
        }
        None => !pattern.contains('*') && pattern == name,
    }
}

/// Hex SHA-256 over the leaf certificate's DER.
pub fn fingerprint_certificate(chain: &CertificateChain) -> Option<String> {
    chain.leaf().map(|leaf| hex::encode(Sha256::digest(leaf)))
}

/// Subject common name of the leaf, if present.
pub fn leaf_common_name(chain: &CertificateChain) -> Option<String> {
    let leaf = parse(chain.leaf()?).ok()?;
    let cn = leaf.subject().iter_common_name().next()?.as_str().ok()?.to_string();
    Some(cn)
}

/// Names a rule can match the leaf by: subject CN, DNS subjectAltNames,
/// and subject and issuer organizations. Deduplicated, in that order.
pub fn leaf_names(chain: &CertificateChain) -> Vec<String> {
    let Some(Ok(leaf)) = chain.leaf().map(parse) else { return Vec::new() };
    let mut out: Vec<String> = Vec::new();
    let mut push = |s: &str| {
        if !s.is_empty() && !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    };
    for cn in leaf.subject().iter_common_name() {
        if let Ok(s) = cn.as_str() {
            push(s);
        }
    }
    if let Ok(Some(san)) = leaf.subject_alternative_name() {
        for n in &san.value.general_names {
            if let GeneralName::DNSName(d) = n {
                push(d);
            }
        }
    }
    for org in leaf.subject().iter_organization().chain(leaf.issuer().iter_organization()) {
        if let Ok(s) = org.as_str() {
            push(s);
        }
    }
    out
}

/// Reads a PEM bundle (any number of CERTIFICATE blocks) or a single DER
/// certificate.
pub fn load_certificates(raw: &[u8]) -> Result<Vec<Vec<u8>>, CertError> {
    if raw.windows(11).any(|w| w == b"-----BEGIN ") {
        let mut out = Vec::new();
        for pem in x509_parser::pem::Pem::iter_from_buffer(raw) {
            let pem = pem.map_err(|e| CertError::Pem(e.to_string()))?;
            if pem.label == "CERTIFICATE" {
                out.push(pem.contents);
            }
        }
        if out.is_empty() {
            return Err(CertError::EmptyBundle);
        }
        return Ok(out);
    }
    if raw.is_empty() {
        return Err(CertError::EmptyBundle);
    }
    parse(raw).map_err(|reason| CertError::ParseError { index: 0, reason })?;
    Ok(vec![raw.to_vec()])
}
