//! Per-domain QUIC measurement: resolve, handshake with SNI, classify, and
//! summarize a zone. Also the TCP-side checks (Alt-Svc, landing pages,
//! server banners).

mod altsvc;
mod banner;
mod http;
mod resolve;
mod similarity;

use std::collections::BTreeMap;
use std::io::BufRead;
use std::net::IpAddr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::handshake::{
    fingerprint_certificate, perform_handshake, validate_certificate, CertVerdict, HandshakeParams, HandshakeResult,
    HandshakeStatus, ValidityPolicy,
};
use crate::net::AddressPolicy;
use crate::probe::ProbeTarget;
use crate::util::normalize_name;

pub use altsvc::{
    advertisement_from_headers, check_alt_svc, check_alt_svc_at, parse_alt_svc, AltSvcAdvertisement, AltSvcEntry,
    AltSvcError, AltSvcParseError, AltSvcSource, DEFAULT_MAX_AGE,
};
pub use banner::{grab_banner, Banner, BANNER_TIMEOUT};
pub use http::{parse_response, HttpClient, HttpError, HttpResponse};
pub use resolve::{DnsResolver, DomainRecord, ResolutionStatus, Resolver, StaticResolver, SystemResolver};
pub use similarity::{
    compare_landing_pages, compare_metrics, counts_agree, page_metrics, Metric, MetricValue, PageMetrics,
    SimilarityReport, AGREEMENT_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    QuicEnabled,
    Timeout,
    VersionFailed,
    ProtocolError,
    InvalidIp,
    DnsFailure,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::QuicEnabled,
        Category::Timeout,
        Category::VersionFailed,
        Category::ProtocolError,
        Category::InvalidIp,
        Category::DnsFailure,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::QuicEnabled => "QUIC-enabled",
            Category::Timeout => "Timeout",
            Category::VersionFailed => "Version-failed",
            Category::ProtocolError => "Protocol-error",
            Category::InvalidIp => "Invalid-IP",
            Category::DnsFailure => "DNS-failure",
        }
    }
}

impl From<HandshakeStatus> for Category {
    fn from(s: HandshakeStatus) -> Category {
        match s {
            HandshakeStatus::QuicEnabled => Category::QuicEnabled,
            HandshakeStatus::VersionFailed => Category::VersionFailed,
            HandshakeStatus::ProtocolError => Category::ProtocolError,
            HandshakeStatus::Timeout => Category::Timeout,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainScanConfig {
    /// Template for every handshake; the SNI is replaced by the domain.
    pub handshake: HandshakeParams,
    pub port: u16,
    pub trust_anchors: Vec<Vec<u8>>,
    pub validity: ValidityPolicy,
    pub address_policy: AddressPolicy,
    /// Clock for certificate expiry; the current time when `None`.
    pub now: Option<DateTime<Utc>>,
}

impl Default for DomainScanConfig {
    fn default() -> Self {
        DomainScanConfig {
            handshake: HandshakeParams::default(),
            port: 443,
            trust_anchors: Vec::new(),
            validity: ValidityPolicy::Full,
            address_policy: AddressPolicy::default(),
            now: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanVerdict {
    pub domain: String,
    pub category: Category,
    pub cert_valid: bool,
    pub resolution: DomainRecord,
    /// Address the handshake went to.
    pub address: Option<IpAddr>,
    pub handshake: Option<HandshakeResult>,
    pub cert: Option<CertVerdict>,
    /// Why certificate validation could not run.
    pub cert_error: Option<String>,
}

/// First routable address, IPv4 preferred.
pub fn select_address(addresses: &[IpAddr], policy: &AddressPolicy) -> Option<IpAddr> {
    let routable = |want_v4: bool| {
        addresses.iter().copied().find(|a| crate::net::canonical(*a).is_ipv4() == want_v4 && policy.is_routable(*a))
    };
    routable(true).or_else(|| routable(false))
}

/// Classifies one domain: DNS failure, then invalid address, then the
/// outcome of a handshake with the domain as SNI.
pub fn scan_domain(name: &str, resolver: &dyn Resolver, cfg: &DomainScanConfig) -> ScanVerdict {
    let name = normalize_name(name);
    let resolution = resolver.resolve(&name);
    let mut v = ScanVerdict {
        domain: name.clone(),
        category: Category::DnsFailure,
        cert_valid: false,
        resolution,
        address: None,
        handshake: None,
        cert: None,
        cert_error: None,
    };
    if v.resolution.status != ResolutionStatus::Ok {
        return v;
    }
    let Some(addr) = select_address(&v.resolution.addresses, &cfg.address_policy) else {
        v.category = Category::InvalidIp;
        return v;
    };
    v.address = Some(addr);
    let target = ProbeTarget::new(addr, cfg.port).expect("configured port is non-zero");
    let params = HandshakeParams { sni: name.clone(), ..cfg.handshake.clone() };
    let result = perform_handshake(target, &params);
    v.category = result.status.into();
    if let Some(chain) = &result.certs {
        match validate_certificate(chain, &name, &cfg.trust_anchors, cfg.now.unwrap_or_else(Utc::now)) {
            Ok(verdict) => {
                v.cert_valid = cfg.validity.accepts(&verdict);
                v.cert = Some(verdict);
            }
            Err(e) => v.cert_error = Some(e.to_string()),
        }
    }
    v.handshake = Some(result);
    v
}

/// Scans `names` on `workers` threads; results keep the input order.
pub fn scan_domains(
    names: &[String],
    resolver: &dyn Resolver,
    cfg: &DomainScanConfig,
    workers: usize,
) -> Vec<ScanVerdict> {
    crate::util::parallel_map(names, workers, |n| scan_domain(n, resolver, cfg))
}

/// One line of domain-scan output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainVerdictRecord {
    pub domain: String,
    pub category: Category,
    pub cert_valid: bool,
    pub resolution: ResolutionStatus,
    pub address: Option<IpAddr>,
    pub version: Option<crate::wire::VersionTag>,
    pub scid_hex: Option<String>,
    pub cert_fingerprint: Option<String>,
    pub cert: Option<CertVerdict>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
    pub rtt_ms: Option<f64>,
    pub ts: DateTime<Utc>,
}

impl DomainVerdictRecord {
    pub fn new(v: &ScanVerdict, ts: DateTime<Utc>) -> DomainVerdictRecord {
        let h = v.handshake.as_ref();
        DomainVerdictRecord {
            domain: v.domain.clone(),
            category: v.category,
            cert_valid: v.cert_valid,
            resolution: v.resolution.status,
            address: v.address,
            version: h.and_then(|h| h.negotiated_version),
            scid_hex: h.and_then(|h| h.scfg.as_ref()).map(|c| hex::encode(c.scid)),
            cert_fingerprint: h.and_then(|h| h.certs.as_ref()).and_then(fingerprint_certificate),
            cert: v.cert,
            detail: v.cert_error.clone().or_else(|| h.map(|h| h.detail.clone())).unwrap_or_default(),
            rtt_ms: h.and_then(|h| h.rtt).map(|d| d.as_secs_f64() * 1000.0),
            ts,
        }
    }
}

/// `100 * count / total` in hundredths of a percent, rounded half to even.
pub fn percent_hundredths(count: u64, total: u64) -> u64 {
    if total == 0 {
        return 0;
    }
    let num = count as u128 * 10_000;
    let (q, r) = (num / total as u128, num % total as u128);
    let up = match (2 * r).cmp(&(total as u128)) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => q % 2 == 1,
        std::cmp::Ordering::Less => false,
    };
    (q + u128::from(up)) as u64
}

fn format_hundredths(h: u64) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneSummary {
    pub total: u64,
    pub counts: BTreeMap<Category, u64>,
    /// QUIC-enabled domains whose certificate passed validation.
    pub cert_valid: u64,
    /// Domains in `total` not assigned to any category; zero when the
    /// summary was built from verdicts.
    pub unaccounted: u64,
}

impl Default for ZoneSummary {
    fn default() -> Self {
        ZoneSummary {
            total: 0,
            counts: Category::ALL.iter().map(|c| (*c, 0)).collect(),
            cert_valid: 0,
            unaccounted: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SummaryError {
    #[error("category counts sum to {sum}, above the total {total}")]
    CountsExceedTotal { sum: u64, total: u64 },
    #[error("{cert_valid} valid certificates but only {enabled} QUIC-enabled domains")]
    CertsExceedEnabled { cert_valid: u64, enabled: u64 },
}

impl ZoneSummary {
    /// Builds a summary from published counts, where the categories need
    /// not cover the whole total.
    pub fn from_counts(total: u64, counts: &[(Category, u64)], cert_valid: u64) -> Result<ZoneSummary, SummaryError> {
        let mut s = ZoneSummary { total, cert_valid, ..ZoneSummary::default() };
        for (c, n) in counts {
            *s.counts.get_mut(c).expect("all categories present") += n;
        }
        let sum: u64 = s.counts.values().sum();
        if sum > total {
            return Err(SummaryError::CountsExceedTotal { sum, total });
        }
        let enabled = s.count(Category::QuicEnabled);
        if cert_valid > enabled {
            return Err(SummaryError::CertsExceedEnabled { cert_valid, enabled });
        }
        s.unaccounted = total - sum;
        Ok(s)
    }

    pub fn add(&mut self, category: Category, cert_valid: bool) {
        debug_assert!(!cert_valid || category == Category::QuicEnabled);
        self.total += 1;
        *self.counts.get_mut(&category).expect("all categories present") += 1;
        self.cert_valid += u64::from(cert_valid);
    }

    pub fn merge(&mut self, other: &ZoneSummary) {
        self.total += other.total;
        for (c, n) in &other.counts {
            *self.counts.entry(*c).or_default() += n;
        }
        self.cert_valid += other.cert_valid;
        self.unaccounted += other.unaccounted;
    }

    pub fn count(&self, c: Category) -> u64 {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn percentage_hundredths(&self, c: Category) -> u64 {
        percent_hundredths(self.count(c), self.total)
    }

    pub fn percentage(&self, c: Category) -> f64 {
        self.percentage_hundredths(c) as f64 / 100.0
    }

    pub fn cert_valid_percentage(&self) -> f64 {
        percent_hundredths(self.cert_valid, self.total) as f64 / 100.0
    }

    /// Rows in table order: label, count, percentage with two decimals.
    pub fn rows(&self) -> Vec<(String, u64, String)> {
        let total_pct = if self.total == 0 { "0.00" } else { "100.00" };
        let mut rows = vec![("Domains".to_string(), self.total, total_pct.to_string())];
        let row = |label: &str, n: u64| (label.to_string(), n, format_hundredths(percent_hundredths(n, self.total)));
        rows.push(row(Category::QuicEnabled.label(), self.count(Category::QuicEnabled)));
        rows.push(row("Valid Certificate", self.cert_valid));
        for c in &Category::ALL[1..] {
            rows.push(row(c.label(), self.count(*c)));
        }
        if self.unaccounted > 0 {
            rows.push(row("Unaccounted", self.unaccounted));
        }
        rows
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["category", "count", "percentage"])?;
        for (label, n, pct) in self.rows() {
            out.write_record([label, n.to_string(), pct])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn summarize_zone<'a>(verdicts: impl IntoIterator<Item = &'a ScanVerdict>) -> ZoneSummary {
    let mut s = ZoneSummary::default();
    for v in verdicts {
        s.add(v.category, v.cert_valid);
    }
    s
}

/// Reads domain names from a plain list or a zone file.
///
/// Plain lists hold one name per line. Zone-file lines contribute their
/// owner name (relative names are completed with `$ORIGIN`); consecutive
/// repeats are collapsed. `#` and `;` start comments.
pub fn parse_domain_list<R: BufRead>(r: R) -> impl Iterator<Item = std::io::Result<String>> {
    let mut origin: Option<String> = None;
    let mut last: Option<String> = None;
    r.lines().filter_map(move |line| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e)),
        };
        let content = line.split([';', '#']).next().unwrap_or("");
        if content.starts_with([' ', '\t']) {
            return None;
        }
        let mut words = content.split_whitespace();
        let first = words.next()?;
        if first.eq_ignore_ascii_case("$ORIGIN") {
            origin = words.next().map(normalize_name);
            return None;
        }
        if first.starts_with('$') {
            return None;
        }
        let name = match (&origin, first) {
            (Some(o), "@") => o.clone(),
            (Some(o), n) if !n.ends_with('.') => format!("{}.{o}", normalize_name(n)),
            (_, n) => normalize_name(n),
        };
        if name.is_empty() || last.as_deref() == Some(name.as_str()) {
            return None;
        }
        last = Some(name.clone());
        Some(Ok(name))
    })
}
