//! Campaign orchestration: resumable scans with checkpointed, ordered
//! output, plus the one-shot traffic, report and selftest runs.

mod config;
mod rows;
pub mod selftest;
mod sink;
mod state;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::{Deserialize, Serialize};

pub use config::{
    CampaignConfig, DatedScan, DomainSection, GrabSection, OutputFormat, OutputSection, ProbeSection,
    ReportSection, ResolverSpec, SelftestSection, TrafficSection, BLOCKLIST_ENV,
};
pub use rows::Row;
pub use sink::{CheckpointHook, OrderedSink};
pub use state::{file_digest, new_campaign_id, CampaignState};

use crate::domain::{
    parse_domain_list, scan_domain, DnsResolver, DomainScanConfig, DomainVerdictRecord, Resolver, StaticResolver,
    SystemResolver,
};
use crate::handshake::{load_certificates, perform_handshake, validate_certificate, HandshakeParams, HandshakeRecord};
use crate::net::{AddressPolicy, PrefixSet};
use crate::probe::{parse_target_lines, ProbeError, ProbeRecord, ProbeTarget, ScanConfig, Scanner, UdpTransport};
use crate::report::{
    aggregate_version_sets, attribute_host, cluster_certificates, default_cert_rules, default_rdns_rules, read_jsonl,
    HostObservation, RuleSet,
};
use crate::traffic::{
    compute_shares_parallel, emit_timeseries, read_flows, read_pcap, write_share_table, Attribution, OperatorMap,
    PrefixMap, ShareOptions, ShareReport,
};
use crate::util::parallel_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignKind {
    ProbeIps,
    ScanDomains,
    Grab,
    Traffic,
    Report,
    Selftest,
}

impl CampaignKind {
    pub const ALL: [CampaignKind; 6] = [
        CampaignKind::ProbeIps,
        CampaignKind::ScanDomains,
        CampaignKind::Grab,
        CampaignKind::Traffic,
        CampaignKind::Report,
        CampaignKind::Selftest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CampaignKind::ProbeIps => "probe-ips",
            CampaignKind::ScanDomains => "scan-domains",
            CampaignKind::Grab => "grab",
            CampaignKind::Traffic => "traffic",
            CampaignKind::Report => "report",
            CampaignKind::Selftest => "selftest",
        }
    }

    /// Kinds that checkpoint and can be resumed.
    pub fn resumable(self) -> bool {
        matches!(self, CampaignKind::ProbeIps | CampaignKind::ScanDomains | CampaignKind::Grab)
    }
}

impl std::fmt::Display for CampaignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CampaignKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CampaignKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown campaign kind {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("input of campaign {id} changed since it started (digest {expected}, now {found})")]
    ResumeDigestMismatch { id: String, expected: String, found: String },
    #[error("no campaign state for {0:?}")]
    UnknownCampaign(String),
    #[error("campaign {0} interrupted; resume with --resume {0}")]
    Interrupted(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("selftest setup failed: {0}")]
    Selftest(String),
}

impl CampaignError {
    pub fn io(path: &Path, source: std::io::Error) -> CampaignError {
        CampaignError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Campaign id to continue.
    pub resume: Option<String>,
    /// Id for a new campaign; generated when `None`.
    pub id: Option<String>,
    pub hook: Option<CheckpointHook<'a>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub id: String,
    pub kind: Option<CampaignKind>,
    pub emitted: u64,
    /// Input items without an output record (unparsable, blocklisted).
    pub skipped: u64,
    pub artifacts: Vec<PathBuf>,
    /// Selftest cells that did not pass.
    pub failures: u64,
    /// Human-readable result lines.
    pub lines: Vec<String>,
}

/// Runs one campaign. Resumable kinds continue from `opts.resume` using the
/// configuration saved when the campaign started.
pub fn run_campaign(
    kind: CampaignKind,
    cfg: &CampaignConfig,
    opts: RunOptions<'_>,
) -> Result<CampaignSummary, CampaignError> {
    if opts.resume.is_some() && !kind.resumable() {
        return Err(CampaignError::ConfigInvalid(format!("{kind} campaigns cannot be resumed")));
    }
    let opts_id = if kind.resumable() { None } else { opts.id.clone() };
    match kind {
        CampaignKind::ProbeIps | CampaignKind::ScanDomains | CampaignKind::Grab => run_resumable(kind, cfg, opts),
        CampaignKind::Traffic => run_traffic(cfg),
        CampaignKind::Report => run_report(cfg),
        CampaignKind::Selftest => run_selftest(cfg),
    }
    .map(|mut s| {
        if let Some(id) = opts_id {
            s.id = id;
        }
        s
    })
}

fn missing(section: &str) -> CampaignError {
    CampaignError::ConfigInvalid(format!("missing [{section}] section"))
}

fn input_of(kind: CampaignKind, cfg: &CampaignConfig) -> Result<PathBuf, CampaignError> {
    let p = match kind {
        CampaignKind::ProbeIps => cfg.probe.as_ref().ok_or_else(|| missing("probe"))?.targets.clone(),
        CampaignKind::ScanDomains => cfg.domains.as_ref().ok_or_else(|| missing("domains"))?.zone.clone(),
        CampaignKind::Grab => cfg.grab.as_ref().ok_or_else(|| missing("grab"))?.targets.clone(),
        _ => unreachable!("only scan kinds have an input list"),
    };
    if p.as_os_str().is_empty() {
        return Err(CampaignError::ConfigInvalid(format!("{kind} needs an input file")));
    }
    Ok(p)
}

fn output_path(cfg: &CampaignConfig) -> Result<PathBuf, CampaignError> {
    cfg.output.path.clone().ok_or_else(|| CampaignError::ConfigInvalid("no output path; set [output] path or --out".into()))
}

fn run_resumable(
    kind: CampaignKind,
    cfg: &CampaignConfig,
    opts: RunOptions<'_>,
) -> Result<CampaignSummary, CampaignError> {
    let state_dir = cfg.output.state_dir.clone();
    let (cfg, state) = match &opts.resume {
        Some(id) => {
            let state = CampaignState::load(&state_dir, id)?;
            if state.kind != kind {
                return Err(CampaignError::ConfigInvalid(format!("campaign {id} is a {} campaign", state.kind)));
            }
            let snapshot = CampaignConfig::parse(&state.config)?;
            let found = file_digest(&input_of(kind, &snapshot)?)?;
            if found != state.input_digest {
                return Err(CampaignError::ResumeDigestMismatch {
                    id: id.clone(),
                    expected: state.input_digest.clone(),
                    found,
                });
            }
            (snapshot, state)
        }
        None => {
            let now = Utc::now();
            let state = CampaignState {
                id: opts.id.clone().unwrap_or_else(new_campaign_id),
                kind,
                input_digest: file_digest(&input_of(kind, cfg)?)?,
                cursor: 0,
                output: output_path(cfg)?,
                output_offset: 0,
                format: cfg.output.format,
                config: cfg.to_toml(),
                created: now,
                updated: now,
                done: false,
            };
            (cfg.clone(), state)
        }
    };
    let mut summary = CampaignSummary { id: state.id.clone(), kind: Some(kind), ..Default::default() };
    summary.artifacts.push(state.output.clone());
    if state.done {
        log::info!("campaign {} already complete", state.id);
        return Ok(summary);
    }
    if state.cursor > 0 {
        log::info!("resuming campaign {} at item {}", state.id, state.cursor);
    }
    let every = cfg.output.checkpoint_every;
    let (emitted, skipped) = match kind {
        CampaignKind::ProbeIps => {
            let sink = OrderedSink::open::<ProbeRecord>(state, &state_dir, every, opts.hook)?;
            run_probe(&cfg, sink)?
        }
        CampaignKind::ScanDomains => {
            let sink = OrderedSink::open::<DomainVerdictRecord>(state, &state_dir, every, opts.hook)?;
            run_domains(&cfg, sink)?
        }
        CampaignKind::Grab => {
            let sink = OrderedSink::open::<HandshakeRecord>(state, &state_dir, every, opts.hook)?;
            run_grab(&cfg, sink)?
        }
        _ => unreachable!(),
    };
    summary.emitted = emitted;
    summary.skipped = skipped;
    Ok(summary)
}

fn load_blocklist(path: Option<&Path>) -> Result<PrefixSet, CampaignError> {
    let Some(path) = path else { return Ok(PrefixSet::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CampaignError::io(path, e))?;
    PrefixSet::parse_list(&text).map_err(|e| CampaignError::ConfigInvalid(format!("{}: {}", path.display(), e.0)))
}

/// Usual locations of the system CA bundle, tried when no anchors are set.
const SYSTEM_BUNDLES: [&str; 3] =
    ["/etc/ssl/certs/ca-certificates.crt", "/etc/pki/tls/certs/ca-bundle.crt", "/etc/ssl/cert.pem"];

fn load_anchors(path: Option<&Path>) -> Result<Vec<Vec<u8>>, CampaignError> {
    let Some(path) = path else {
        for bundle in SYSTEM_BUNDLES {
            if let Ok(raw) = std::fs::read(bundle) {
                if let Ok(mut anchors) = load_certificates(&raw) {
                    // one unparseable root would fail every validation
                    anchors.retain(|der| x509_parser::parse_x509_certificate(der).is_ok());
                    log::info!("using {} trust anchors from {bundle}", anchors.len());
                    return Ok(anchors);
                }
            }
        }
        log::warn!("no trust anchors configured or found; no chain will validate");
        return Ok(Vec::new());
    };
    let raw = std::fs::read(path).map_err(|e| CampaignError::io(path, e))?;
    load_certificates(&raw).map_err(|e| CampaignError::ConfigInvalid(format!("{}: {e}", path.display())))
}

fn open_input(path: &Path) -> Result<BufReader<File>, CampaignError> {
    File::open(path).map(BufReader::new).map_err(|e| CampaignError::io(path, e))
}

struct ProbeRun<'a> {
    sink: OrderedSink<'a>,
    /// Input indices waiting on each outstanding target. A target repeated
    /// while its probe is out shares that probe's result.
    waiting: HashMap<ProbeTarget, Vec<u64>>,
    error: Option<CampaignError>,
}

impl ProbeRun<'_> {
    fn push(&mut self, index: u64, line: Option<Vec<u8>>) {
        if self.error.is_none() {
            if let Err(e) = self.sink.push(index, line) {
                self.error = Some(e);
            }
        }
    }

    fn halted(&self) -> bool {
        self.error.is_some() || self.sink.is_stopped()
    }
}

fn run_probe(cfg: &CampaignConfig, sink: OrderedSink<'_>) -> Result<(u64, u64), CampaignError> {
    let p = cfg.probe.as_ref().ok_or_else(|| missing("probe"))?;
    let scan = ScanConfig {
        rate: p.rate,
        timeout: p.timeout,
        retries: p.retries,
        blocklist: load_blocklist(p.blocklist.as_deref())?,
        shuffle: p.shuffle,
        probe_version: p.probe_version,
        pad_to: p.pad_to,
        secret: p.secret,
        sni: None,
        max_in_flight: p.max_in_flight,
    };
    let blocklist = scan.blocklist.clone();
    let transport = UdpTransport::bind_any().map_err(ProbeError::from)?;
    let scanner = Scanner::new(&transport, scan)?;

    let start = sink.cursor();
    let run = RefCell::new(ProbeRun { sink, waiting: HashMap::new(), error: None });
    let mut lines = parse_target_lines(open_input(&p.targets)?).zip(0u64..).skip(start as usize);
    let targets = std::iter::from_fn(|| loop {
        let mut r = run.borrow_mut();
        if r.halted() {
            return None;
        }
        let (item, index) = lines.next()?;
        match item {
            Ok(t) if !blocklist.contains(t.address) => match r.waiting.get_mut(&t) {
                Some(queue) => queue.push(index),
                None => {
                    r.waiting.insert(t, vec![index]);
                    return Some(t);
                }
            },
            Ok(t) => {
                log::debug!("item {index}: {} is blocklisted", t.address);
                r.push(index, None);
            }
            Err(e) => {
                log::warn!("item {index}: {e}");
                r.push(index, None);
            }
        }
    });
    scanner.run(targets, |t, o| {
        let mut r = run.borrow_mut();
        let indices = r.waiting.remove(&t).unwrap_or_default();
        let line = r.sink.encode(&ProbeRecord::new(&t, &o, Utc::now()));
        for index in indices {
            r.push(index, Some(line.clone()));
        }
    })?;
    let run = run.into_inner();
    if let Some(e) = run.error {
        return Err(e);
    }
    finish(run.sink)
}

fn finish(sink: OrderedSink<'_>) -> Result<(u64, u64), CampaignError> {
    let counts = (sink.emitted, sink.skipped);
    sink.finish()?;
    Ok(counts)
}

/// Feeds `items` to `work` in batches on a thread pool and emits results
/// in input order. `None` items produce no output.
fn run_batched<T, R, F>(
    mut sink: OrderedSink<'_>,
    items: impl Iterator<Item = Option<T>>,
    batch_size: usize,
    workers: usize,
    work: F,
) -> Result<(u64, u64), CampaignError>
where
    T: Sync,
    R: Row + Send,
    F: Fn(&T) -> R + Sync,
{
    let mut index = sink.cursor();
    let mut items = items.skip(index as usize).peekable();
    while items.peek().is_some() && !sink.is_stopped() {
        let batch: Vec<Option<T>> = items.by_ref().take(batch_size.max(1)).collect();
        let live: Vec<&T> = batch.iter().flatten().collect();
        let mut results = parallel_map(&live, workers, |t| work(t)).into_iter();
        for item in &batch {
            let line = item.as_ref().map(|_| sink.encode(&results.next().expect("one result per item")));
            sink.push(index, line)?;
            index += 1;
        }
    }
    finish(sink)
}

fn build_resolver(spec: &str) -> Result<Box<dyn Resolver>, CampaignError> {
    Ok(match spec.parse::<ResolverSpec>().map_err(CampaignError::ConfigInvalid)? {
        ResolverSpec::System => Box::new(SystemResolver),
        ResolverSpec::Static(path) => {
            Box::new(StaticResolver::from_file(&path).map_err(CampaignError::ConfigInvalid)?)
        }
        ResolverSpec::Dns(addr) => Box::new(DnsResolver::new(addr)),
    })
}

fn run_domains(cfg: &CampaignConfig, sink: OrderedSink<'_>) -> Result<(u64, u64), CampaignError> {
    let d = cfg.domains.as_ref().ok_or_else(|| missing("domains"))?;
    let resolver = build_resolver(&d.resolver)?;
    let scan = DomainScanConfig {
        handshake: HandshakeParams { version: d.version, timeout: d.timeout, ..HandshakeParams::default() },
        port: d.port,
        trust_anchors: load_anchors(d.trust_anchors.as_deref())?,
        validity: d.validity,
        address_policy: if d.allow_loopback { AddressPolicy::allow_loopback() } else { AddressPolicy::default() },
        now: d.now,
    };
    let names = parse_domain_list(open_input(&d.zone)?).map(|n| match n {
        Ok(n) => Some(n),
        Err(e) => {
            log::warn!("unreadable zone line: {e}");
            None
        }
    });
    let resolver = resolver.as_ref();
    run_batched(sink, names, cfg.output.batch_size, cfg.output.workers, |name: &String| {
        DomainVerdictRecord::new(&scan_domain(name, resolver, &scan), Utc::now())
    })
}

fn run_grab(cfg: &CampaignConfig, sink: OrderedSink<'_>) -> Result<(u64, u64), CampaignError> {
    let g = cfg.grab.as_ref().ok_or_else(|| missing("grab"))?;
    let blocklist = load_blocklist(g.blocklist.as_deref())?;
    let anchors = load_anchors(g.trust_anchors.as_deref())?;
    let params = HandshakeParams { version: g.version, timeout: g.timeout, ..HandshakeParams::with_sni(&g.sni) };
    let targets = parse_target_lines(open_input(&g.targets)?).map(|t| match t {
        Ok(t) if !blocklist.contains(t.address) => Some(t),
        Ok(_) => None,
        Err(e) => {
            log::warn!("{e}");
            None
        }
    });
    run_batched(sink, targets, cfg.output.batch_size, cfg.output.workers, |t: &ProbeTarget| {
        let r = perform_handshake(*t, &params);
        let verdict = match (&r.certs, anchors.is_empty()) {
            (Some(chain), false) => validate_certificate(chain, &params.sni, &anchors, Utc::now()).ok(),
            _ => None,
        };
        HandshakeRecord::new(&t.socket_addr().to_string(), &params.sni, &r, verdict.as_ref())
    })
}

fn load_attribution(t: &TrafficSection) -> Result<Attribution, CampaignError> {
    let prefixes = match &t.prefixes {
        Some(p) => PrefixMap::from_csv(open_input(p)?)
            .map_err(|e| CampaignError::ConfigInvalid(format!("{}: {e}", p.display())))?,
        None => PrefixMap::new(),
    };
    let operators = load_operators(t.operators.as_deref())?;
    let local = PrefixSet::parse_list(&t.local_prefixes.join("\n"))
        .map_err(|e| CampaignError::ConfigInvalid(format!("local_prefixes: {}", e.0)))?;
    Ok(Attribution { prefixes, operators, local, local_asns: t.local_asns.iter().copied().collect() })
}

fn load_operators(path: Option<&Path>) -> Result<OperatorMap, CampaignError> {
    let Some(path) = path else { return Ok(OperatorMap::new()) };
    let text = std::fs::read_to_string(path).map_err(|e| CampaignError::io(path, e))?;
    OperatorMap::parse(&text).map_err(|e| CampaignError::ConfigInvalid(format!("{}: {e}", path.display())))
}

/// Reads the configured flows and tallies them. Returns the report and the
/// number of unusable input records.
pub fn traffic_shares(t: &TrafficSection, workers: usize) -> Result<(ShareReport, u64), CampaignError> {
    let attr = load_attribution(t)?;
    let is_pcap = t.flows.extension().is_some_and(|e| e.eq_ignore_ascii_case("pcap"));
    let (flows, skipped) = if is_pcap {
        read_pcap(open_input(&t.flows)?, t.length_cap)
            .map_err(|e| CampaignError::io(&t.flows, std::io::Error::other(e)))?
    } else {
        let mut flows = Vec::new();
        let mut skipped = 0;
        for f in read_flows(open_input(&t.flows)?) {
            match f {
                Ok(f) => flows.push(f),
                Err(e) => {
                    log::warn!("{}: {e}", t.flows.display());
                    skipped += 1;
                }
            }
        }
        (flows, skipped)
    };
    let opts = ShareOptions { bin: t.bin, weighting: t.weighting };
    Ok((compute_shares_parallel(&flows, &attr, opts, workers), skipped))
}

fn create(path: &Path) -> Result<BufWriter<File>, CampaignError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CampaignError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CampaignError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CampaignError {
    CampaignError::io(path, e.into())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Traffic artifacts are CSV whatever the output format: the time series at
/// the output path and the share table beside it.
fn run_traffic(cfg: &CampaignConfig) -> Result<CampaignSummary, CampaignError> {
    let t = cfg.traffic.as_ref().ok_or_else(|| missing("traffic"))?;
    let out = output_path(cfg)?;
    let (report, skipped) = traffic_shares(t, cfg.output.workers)?;
    emit_timeseries(&report, create(&out)?).map_err(|e| csv_err(&out, e))?;
    let table = with_suffix(&out, ".shares.csv");
    write_share_table(&report, create(&table)?).map_err(|e| csv_err(&table, e))?;
    Ok(CampaignSummary {
        id: new_campaign_id(),
        kind: Some(CampaignKind::Traffic),
        emitted: report.bins.len() as u64,
        skipped,
        artifacts: vec![out, table],
        ..Default::default()
    })
}

fn load_rules(path: Option<&Path>, default: fn() -> RuleSet) -> Result<RuleSet, CampaignError> {
    let Some(path) = path else { return Ok(default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CampaignError::io(path, e))?;
    RuleSet::parse(&text).map_err(|e| CampaignError::ConfigInvalid(format!("{}: {e}", path.display())))
}

/// Writes every aggregation whose inputs are configured into the output
/// directory.
fn run_report(cfg: &CampaignConfig) -> Result<CampaignSummary, CampaignError> {
    let r = cfg.report.clone().unwrap_or_default();
    let dir = output_path(cfg)?;
    std::fs::create_dir_all(&dir).map_err(|e| CampaignError::io(&dir, e))?;
    let mut summary =
        CampaignSummary { id: new_campaign_id(), kind: Some(CampaignKind::Report), ..Default::default() };

    if !r.version_scans.is_empty() {
        let inputs = r
            .version_scans
            .iter()
            .map(|s| Ok((s.date, open_input(&s.path)?)))
            .collect::<Result<Vec<_>, CampaignError>>()?;
        let series = aggregate_version_sets(inputs, r.threshold).map_err(|e| CampaignError::io(&dir, e))?;
        let path = dir.join("version_sets.csv");
        series.write_csv(create(&path)?).map_err(|e| csv_err(&path, e))?;
        summary.skipped += series.malformed;
        for date in series.dates.keys() {
            summary.lines.push(format!("{date}: {} QUIC-capable hosts", series.hosts(*date)));
        }
        summary.artifacts.push(path);
    }

    if !r.grabs.is_empty() {
        let mut records: Vec<HandshakeRecord> = Vec::new();
        for g in &r.grabs {
            let (mut rs, bad) = read_jsonl(open_input(g)?).map_err(|e| CampaignError::io(g, e))?;
            records.append(&mut rs);
            summary.skipped += bad;
        }
        let clusters = cluster_certificates(&records);
        let path = dir.join("cert_clusters.csv");
        clusters.write_csv(create(&path)?).map_err(|e| csv_err(&path, e))?;
        summary.lines.push(format!(
            "{} hosts with certificates; top-5 {:.2}%, top-10 {:.2}%",
            clusters.hosts_with_cert,
            clusters.top_coverage(5),
            clusters.top_coverage(10)
        ));
        summary.artifacts.push(path);
    }

    if let Some(hosts) = &r.hosts {
        let prefixes = match &r.prefixes {
            Some(p) => PrefixMap::from_csv(open_input(p)?)
                .map_err(|e| CampaignError::ConfigInvalid(format!("{}: {e}", p.display())))?,
            None => PrefixMap::new(),
        };
        let operators = load_operators(r.operators.as_deref())?;
        let rdns = load_rules(r.rdns_rules.as_deref(), default_rdns_rules)?;
        let certs = load_rules(r.cert_rules.as_deref(), default_cert_rules)?;
        let (obs, bad) =
            read_jsonl::<HostObservation, _>(open_input(hosts)?).map_err(|e| CampaignError::io(hosts, e))?;
        summary.skipped += bad;
        let path = dir.join("attribution.jsonl");
        let mut out = create(&path)?;
        for o in &obs {
            let rec = attribute_host(o, &prefixes, &operators, &rdns, &certs);
            serde_json::to_writer(&mut out, &rec).map_err(|e| CampaignError::io(&path, e.into()))?;
            out.write_all(b"\n").map_err(|e| CampaignError::io(&path, e))?;
        }
        out.flush().map_err(|e| CampaignError::io(&path, e))?;
        summary.emitted += obs.len() as u64;
        summary.artifacts.push(path);
    }

    if let Some(t) = &cfg.traffic {
        let (report, bad) = traffic_shares(t, cfg.output.workers)?;
        summary.skipped += bad;
        let path = dir.join("shares.csv");
        write_share_table(&report, create(&path)?).map_err(|e| csv_err(&path, e))?;
        summary.artifacts.push(path);
    }

    if summary.artifacts.is_empty() {
        return Err(CampaignError::ConfigInvalid("report has no inputs configured".into()));
    }
    Ok(summary)
}

fn run_selftest(cfg: &CampaignConfig) -> Result<CampaignSummary, CampaignError> {
    let s = cfg.selftest.clone().unwrap_or_default();
    let cells = selftest::run_selftest(s.trials, s.timeout)?;
    let mut summary =
        CampaignSummary { id: new_campaign_id(), kind: Some(CampaignKind::Selftest), ..Default::default() };
    for c in &cells {
        summary.lines.push(format!(
            "{:<4} {:<28} {}/{} ({} ms)",
            if c.passed() { "PASS" } else { "FAIL" },
            c.cell,
            c.matched,
            c.trials,
            c.elapsed_ms
        ));
        if c.passed() {
            summary.emitted += 1;
        } else {
            summary.failures += 1;
        }
    }
    Ok(summary)
}
