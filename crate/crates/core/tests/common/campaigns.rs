//! Scripted campaigns over loopback responders, for comparing interrupted
//! and uninterrupted runs.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use quic_recon::campaign::{
    run_campaign, CampaignConfig, CampaignError, CampaignKind, CampaignState, DomainSection, GrabSection,
    OutputFormat, ProbeSection, RunOptions,
};
use quic_recon::handshake::ValidityPolicy;
use quic_recon::mock::{serve_routes, Behavior, ProfileRoutes, ResponderHandle};
use rand::seq::SliceRandom;
use rand::Rng;
use std::time::Duration;

use super::{fixture_path, serving_profile};

pub struct Fixture {
    pub kind: CampaignKind,
    pub dir: tempfile::TempDir,
    pub cfg: CampaignConfig,
    _mocks: Vec<ResponderHandle>,
}

fn binds(n: usize) -> Vec<SocketAddr> {
    vec!["127.0.0.1:0".parse().unwrap(); n]
}

fn mock(b: Behavior, n: usize) -> ResponderHandle {
    let mut p = serving_profile();
    p.behavior = b;
    serve_routes(ProfileRoutes::single(p), &binds(n)).unwrap()
}

/// Target lines mixing live responders with blocklisted, malformed and
/// repeated entries.
fn target_lines<R: Rng>(rng: &mut R, mocks: &[ResponderHandle]) -> Vec<String> {
    let mut lines: Vec<String> =
        mocks.iter().flat_map(|m| m.local_addrs().iter().map(|a| a.to_string())).collect();
    for i in 0..rng.gen_range(1..6) {
        lines.push(format!("192.0.2.{}:443", i + 1));
    }
    for _ in 0..rng.gen_range(1..4) {
        lines.push("not-an-address".into());
    }
    lines.shuffle(rng);
    let dup = lines[0].clone();
    lines.push(dup);
    lines
}

impl Fixture {
    pub fn new<R: Rng>(kind: CampaignKind, rng: &mut R) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = CampaignConfig::default();
        cfg.output.format = if rng.gen_bool(0.5) { OutputFormat::Jsonl } else { OutputFormat::Csv };
        cfg.output.checkpoint_every = rng.gen_range(1..40);
        cfg.output.batch_size = rng.gen_range(1..32);
        cfg.output.workers = 8;
        let blocklist = dir.path().join("blocklist.txt");
        std::fs::write(&blocklist, "192.0.2.0/24\n").unwrap();
        let mut mocks = Vec::new();
        match kind {
            CampaignKind::ProbeIps => {
                mocks.push(mock(Behavior::Negotiate, rng.gen_range(40..120)));
                mocks.push(mock(Behavior::Reset, rng.gen_range(5..30)));
                mocks.push(mock(Behavior::Malformed, rng.gen_range(1..10)));
                mocks.push(mock(Behavior::Silent, rng.gen_range(1..10)));
                let targets = dir.path().join("targets.txt");
                std::fs::write(&targets, target_lines(rng, &mocks).join("\n")).unwrap();
                cfg.probe = Some(ProbeSection {
                    targets,
                    rate: 5000,
                    timeout: Duration::from_millis(300),
                    shuffle: rng.gen_bool(0.5),
                    blocklist: Some(blocklist),
                    ..ProbeSection::default()
                });
            }
            CampaignKind::Grab => {
                mocks.push(mock(Behavior::ServeRej, rng.gen_range(20..60)));
                mocks.push(mock(Behavior::Negotiate, rng.gen_range(1..10)));
                mocks.push(mock(Behavior::Silent, rng.gen_range(1..4)));
                let targets = dir.path().join("targets.txt");
                std::fs::write(&targets, target_lines(rng, &mocks).join("\n")).unwrap();
                cfg.grab = Some(GrabSection {
                    targets,
                    timeout: Duration::from_millis(300),
                    blocklist: Some(blocklist),
                    trust_anchors: Some(fixture_path("selfsigned.der")),
                    ..GrabSection::default()
                });
            }
            CampaignKind::ScanDomains => {
                let m = mock(Behavior::ServeRej, 1);
                let addr = m.local_addr();
                mocks.push(m);
                let mut names = Vec::new();
                let mut table = String::new();
                for i in 0..rng.gen_range(30..90) {
                    let name = format!("d{i}.example");
                    let answer = match rng.gen_range(0..6) {
                        0 => "NXDOMAIN".to_string(),
                        1 => "10.1.2.3".to_string(),
                        2 => "SERVFAIL".to_string(),
                        _ => addr.ip().to_string(),
                    };
                    table.push_str(&format!("{name} {answer}\n"));
                    names.push(name);
                }
                names.push("example.com".into());
                table.push_str(&format!("example.com {}\n", addr.ip()));
                names.shuffle(rng);
                let zone = dir.path().join("zone.txt");
                std::fs::write(&zone, names.join("\n")).unwrap();
                let resolver = dir.path().join("resolver.txt");
                std::fs::write(&resolver, table).unwrap();
                cfg.domains = Some(DomainSection {
                    zone,
                    resolver: format!("static:{}", resolver.display()),
                    port: addr.port(),
                    trust_anchors: Some(fixture_path("selfsigned.der")),
                    validity: ValidityPolicy::Full,
                    allow_loopback: true,
                    timeout: Duration::from_millis(300),
                    now: Some(chrono::DateTime::from_timestamp(1_800_000_000, 0).unwrap()),
                    ..DomainSection::default()
                });
            }
            _ => panic!("{kind} is not resumable"),
        }
        Fixture { kind, dir, cfg, _mocks: mocks }
    }

    /// Config writing to its own output and state directory.
    pub fn run_config(&self, tag: &str) -> CampaignConfig {
        let mut cfg = self.cfg.clone();
        cfg.output.path = Some(self.dir.path().join(format!("{tag}.out")));
        cfg.output.state_dir = self.dir.path().join(format!("{tag}.state"));
        cfg
    }

    pub fn run_uninterrupted(&self, tag: &str) -> PathBuf {
        let cfg = self.run_config(tag);
        run_campaign(self.kind, &cfg, RunOptions::default()).unwrap();
        cfg.output.path.unwrap()
    }

    /// Stops the campaign at each of `kills` (counted in checkpoints since
    /// that run started), leaving `junk` after the last checkpointed byte
    /// as a torn write would, and resumes until it completes. Returns the
    /// output path and the number of runs that were cut short.
    pub fn run_with_kills(&self, tag: &str, kills: &[usize], junk: &[u8]) -> (PathBuf, usize) {
        let cfg = self.run_config(tag);
        let out = cfg.output.path.clone().unwrap();
        let id = format!("{tag}-campaign");
        let mut interrupted = 0;
        let mut resume = None;
        for attempt in 0..=kills.len() {
            let mut seen = 0usize;
            let kill_at = kills.get(attempt).copied();
            let mut hook = |_: &CampaignState| {
                seen += 1;
                if Some(seen) == kill_at {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            };
            let opts = RunOptions { resume: resume.clone(), id: Some(id.clone()), hook: Some(&mut hook) };
            match run_campaign(self.kind, &cfg, opts) {
                Ok(_) => return (out, interrupted),
                Err(CampaignError::Interrupted(got)) => {
                    assert_eq!(got, id);
                    interrupted += 1;
                    let mut f = std::fs::OpenOptions::new().append(true).open(&out).unwrap();
                    std::io::Write::write_all(&mut f, junk).unwrap();
                    resume = Some(id.clone());
                }
                Err(e) => panic!("campaign failed: {e}"),
            }
        }
        let opts = RunOptions { resume, id: Some(id), hook: None };
        run_campaign(self.kind, &cfg, opts).unwrap();
        (out, interrupted)
    }
}

const VOLATILE: [&str; 2] = ["ts", "rtt_ms"];

/// Output records without timing fields, sorted, so two runs compare as
/// multisets. Checks CSV framing on the way.
pub fn projected(path: &Path, format: OutputFormat) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut rows: Vec<String> = match format {
        OutputFormat::Jsonl => text
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap_or_else(|e| panic!("{e}: {l:?}"));
                for k in VOLATILE {
                    v.as_object_mut().unwrap().remove(k);
                }
                v.to_string()
            })
            .collect(),
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
            let keep: HashSet<usize> =
                (0..header.len()).filter(|&i| !VOLATILE.contains(&header[i].as_str())).collect();
            r.records()
                .map(|rec| {
                    let rec = rec.unwrap();
                    assert_ne!(rec.iter().collect::<Vec<_>>(), header, "header repeated");
                    rec.iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, f)| f).collect::<Vec<_>>().join(",")
                })
                .collect()
        }
    };
    rows.sort();
    rows
}
