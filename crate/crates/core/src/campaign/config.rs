use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::handshake::ValidityPolicy;
use crate::traffic::Weighting;
use crate::wire::{VersionTag, DEFAULT_PAD_TO, DEFAULT_PROBE_VERSION};

/// Environment variable naming a blocklist file; overrides the config.
pub const BLOCKLIST_ENV: &str = "QUIC_RECON_BLOCKLIST";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Jsonl,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(OutputFormat::Jsonl),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(format!("unknown format {s:?}, expected jsonl or csv")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
    /// Where campaign checkpoints live.
    pub state_dir: PathBuf,
    /// Emitted records between checkpoints.
    pub checkpoint_every: u64,
    /// Items handed to the worker pool at once (domain scans and grabs).
    pub batch_size: usize,
    pub workers: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            path: None,
            format: OutputFormat::Jsonl,
            state_dir: PathBuf::from(".quic-recon"),
            checkpoint_every: 1000,
            batch_size: 256,
            workers: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSection {
    /// One `addr[:port]` per line.
    pub targets: PathBuf,
    pub rate: u32,
    #[serde(with = "crate::util::secs")]
    pub timeout: Duration,
    pub retries: u32,
    pub shuffle: bool,
    pub secret: u64,
    pub probe_version: VersionTag,
    pub pad_to: usize,
    pub max_in_flight: usize,
    pub blocklist: Option<PathBuf>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            targets: PathBuf::new(),
            rate: 1000,
            timeout: Duration::from_secs(12),
            retries: 0,
            shuffle: false,
            secret: 0,
            probe_version: DEFAULT_PROBE_VERSION,
            pad_to: DEFAULT_PAD_TO,
            max_in_flight: 1 << 20,
            blocklist: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSection {
    /// Domain list or zone file.
    pub zone: PathBuf,
    /// `system`, `static:<file>` or `dns:<addr:port>`.
    pub resolver: String,
    pub port: u16,
    pub trust_anchors: Option<PathBuf>,
    pub validity: ValidityPolicy,
    pub allow_loopback: bool,
    #[serde(with = "crate::util::secs")]
    pub timeout: Duration,
    pub version: VersionTag,
    /// Fixed clock for certificate expiry checks.
    pub now: Option<DateTime<Utc>>,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            zone: PathBuf::new(),
            resolver: "system".into(),
            port: 443,
            trust_anchors: None,
            validity: ValidityPolicy::Full,
            allow_loopback: false,
            timeout: Duration::from_secs(12),
            version: VersionTag(*b"Q035"),
            now: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrabSection {
    /// One `addr[:port]` per line.
    pub targets: PathBuf,
    /// Presented to every host; the real hostname is unknown when
    /// enumerating addresses.
    pub sni: String,
    #[serde(with = "crate::util::secs")]
    pub timeout: Duration,
    pub version: VersionTag,
    pub trust_anchors: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
}

impl Default for GrabSection {
    fn default() -> Self {
        GrabSection {
            targets: PathBuf::new(),
            sni: "foo.com".into(),
            timeout: Duration::from_secs(12),
            version: VersionTag(*b"Q035"),
            trust_anchors: None,
            blocklist: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficSection {
    /// Flow CSV, or a pcap trace when the name ends in `.pcap`.
    pub flows: PathBuf,
    pub prefixes: Option<PathBuf>,
    pub operators: Option<PathBuf>,
    pub local_prefixes: Vec<String>,
    pub local_asns: Vec<u32>,
    #[serde(with = "crate::util::secs")]
    pub bin: Duration,
    pub weighting: Weighting,
    /// Wire-length cap for pcap packets.
    pub length_cap: u32,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            flows: PathBuf::new(),
            prefixes: None,
            operators: None,
            local_prefixes: Vec::new(),
            local_asns: Vec::new(),
            bin: crate::traffic::DEFAULT_BIN,
            weighting: Weighting::Bytes,
            length_cap: crate::traffic::DEFAULT_LENGTH_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatedScan {
    pub date: NaiveDate,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportSection {
    pub version_scans: Vec<DatedScan>,
    pub threshold: Option<u64>,
    pub grabs: Vec<PathBuf>,
    /// JSONL host observations to attribute.
    pub hosts: Option<PathBuf>,
    pub prefixes: Option<PathBuf>,
    pub operators: Option<PathBuf>,
    pub rdns_rules: Option<PathBuf>,
    pub cert_rules: Option<PathBuf>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            version_scans: Vec::new(),
            threshold: Some(crate::report::DEFAULT_SET_THRESHOLD),
            grabs: Vec::new(),
            hosts: None,
            prefixes: None,
            operators: None,
            rdns_rules: None,
            cert_rules: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelftestSection {
    pub trials: usize,
    #[serde(with = "crate::util::secs")]
    pub timeout: Duration,
}

impl Default for SelftestSection {
    fn default() -> Self {
        SelftestSection { trials: 100, timeout: Duration::from_millis(500) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub output: OutputSection,
    pub probe: Option<ProbeSection>,
    pub domains: Option<DomainSection>,
    pub grab: Option<GrabSection>,
    pub traffic: Option<TrafficSection>,
    pub report: Option<ReportSection>,
    pub selftest: Option<SelftestSection>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

fn rebase_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        rebase(base, p);
    }
}

impl CampaignConfig {
    pub fn parse(text: &str) -> Result<CampaignConfig, CampaignError> {
        toml::from_str(text).map_err(|e| CampaignError::ConfigInvalid(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<CampaignConfig, CampaignError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CampaignError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let mut cfg = CampaignConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        rebase_opt(base, &mut self.output.path);
        rebase(base, &mut self.output.state_dir);
        if let Some(p) = &mut self.probe {
            rebase(base, &mut p.targets);
            rebase_opt(base, &mut p.blocklist);
        }
        if let Some(d) = &mut self.domains {
            rebase(base, &mut d.zone);
            rebase_opt(base, &mut d.trust_anchors);
            if let Some(file) = d.resolver.strip_prefix("static:") {
                let mut f = PathBuf::from(file);
                rebase(base, &mut f);
                d.resolver = format!("static:{}", f.display());
            }
        }
        if let Some(g) = &mut self.grab {
            rebase(base, &mut g.targets);
            rebase_opt(base, &mut g.trust_anchors);
            rebase_opt(base, &mut g.blocklist);
        }
        if let Some(t) = &mut self.traffic {
            rebase(base, &mut t.flows);
            rebase_opt(base, &mut t.prefixes);
            rebase_opt(base, &mut t.operators);
        }
        if let Some(r) = &mut self.report {
            for s in &mut r.version_scans {
                rebase(base, &mut s.path);
            }
            for g in &mut r.grabs {
                rebase(base, g);
            }
            for p in [&mut r.hosts, &mut r.prefixes, &mut r.operators, &mut r.rdns_rules, &mut r.cert_rules] {
                rebase_opt(base, p);
            }
        }
    }

    /// Applies [`BLOCKLIST_ENV`] when set.
    pub fn apply_env(&mut self) {
        if let Some(path) = std::env::var_os(BLOCKLIST_ENV).filter(|v| !v.is_empty()) {
            let path = PathBuf::from(path);
            if let Some(p) = &mut self.probe {
                p.blocklist = Some(path.clone());
            }
            if let Some(g) = &mut self.grab {
                g.blocklist = Some(path);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Resolver choice parsed from [`DomainSection::resolver`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolverSpec {
    System,
    Static(PathBuf),
    Dns(SocketAddr),
}

impl std::str::FromStr for ResolverSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "system" {
            Ok(ResolverSpec::System)
        } else if let Some(f) = s.strip_prefix("static:") {
            Ok(ResolverSpec::Static(PathBuf::from(f)))
        } else if let Some(a) = s.strip_prefix("dns:") {
            let addr = a
                .parse::<SocketAddr>()
                .or_else(|_| a.parse::<std::net::IpAddr>().map(|ip| SocketAddr::new(ip, 53)))
                .map_err(|_| format!("bad resolver address {a:?}"))?;
            Ok(ResolverSpec::Dns(addr))
        } else {
            Err(format!("unknown resolver {s:?}; expected system, static:<file> or dns:<addr>"))
        }
    }
}
