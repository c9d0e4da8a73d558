mod common;

use std::collections::HashSet;

use common::campaigns::{projected, Fixture};
use quic_recon::campaign::{
    run_campaign, CampaignConfig, CampaignError, CampaignKind, OutputFormat, ReportSection, RunOptions,
    TrafficSection,
};
use rand::rngs::StdRng;
use rand::SeedableRng;

#[test]
fn probe_campaign_interrupted_matches_full_run() {
    let mut rng = StdRng::seed_from_u64(7);
    let fx = Fixture::new(CampaignKind::ProbeIps, &mut rng);
    let full = fx.run_uninterrupted("full");
    let (cut, n) = fx.run_with_kills("cut", &[3, 2], b"{\"addr\":\"torn");
    assert_eq!(n, 2);
    assert_eq!(projected(&full, fx.cfg.output.format), projected(&cut, fx.cfg.output.format));
}

#[test]
fn probe_campaign_output_covers_each_valid_line() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut fx = Fixture::new(CampaignKind::ProbeIps, &mut rng);
    fx.cfg.output.format = OutputFormat::Jsonl;
    let out = fx.run_uninterrupted("full");
    let targets = std::fs::read_to_string(&fx.cfg.probe.as_ref().unwrap().targets).unwrap();
    let valid: Vec<&str> = targets.lines().filter(|l| l.starts_with("127.")).collect();
    let rows = projected(&out, OutputFormat::Jsonl);
    assert_eq!(rows.len(), valid.len());
    let unique: HashSet<&str> = valid.iter().copied().collect();
    let got: HashSet<String> = rows
        .iter()
        .map(|r| {
            let v: serde_json::Value = serde_json::from_str(r).unwrap();
            format!("{}:{}", v["addr"].as_str().unwrap(), v["port"])
        })
        .collect();
    assert_eq!(got, unique.iter().map(|s| s.to_string()).collect());
}

#[test]
fn domain_and_grab_campaigns_resume() {
    for (seed, kind) in [(3, CampaignKind::ScanDomains), (4, CampaignKind::Grab)] {
        let mut rng = StdRng::seed_from_u64(seed);
        let fx = Fixture::new(kind, &mut rng);
        let full = fx.run_uninterrupted("full");
        let (cut, n) = fx.run_with_kills("cut", &[1, 4], b"partial,row");
        assert!(n >= 1, "{kind}: never interrupted");
        assert_eq!(projected(&full, fx.cfg.output.format), projected(&cut, fx.cfg.output.format), "{kind}");
    }
}

#[test]
fn resume_rejects_changed_input_and_unknown_ids() {
    let mut rng = StdRng::seed_from_u64(5);
    let fx = Fixture::new(CampaignKind::ProbeIps, &mut rng);
    let cfg = fx.run_config("x");
    let mut stop = |_: &quic_recon::campaign::CampaignState| std::ops::ControlFlow::Break(());
    let opts = RunOptions { id: Some("x1".into()), hook: Some(&mut stop), ..Default::default() };
    assert!(matches!(run_campaign(CampaignKind::ProbeIps, &cfg, opts), Err(CampaignError::Interrupted(_))));
    let targets = &fx.cfg.probe.as_ref().unwrap().targets;
    let mut text = std::fs::read_to_string(targets).unwrap();
    text.push_str("\n192.0.2.200\n");
    std::fs::write(targets, text).unwrap();
    let opts = RunOptions { resume: Some("x1".into()), ..Default::default() };
    assert!(matches!(
        run_campaign(CampaignKind::ProbeIps, &cfg, opts),
        Err(CampaignError::ResumeDigestMismatch { .. })
    ));
    let opts = RunOptions { resume: Some("missing".into()), ..Default::default() };
    assert!(matches!(run_campaign(CampaignKind::ProbeIps, &cfg, opts), Err(CampaignError::UnknownCampaign(_))));
    let opts = RunOptions { resume: Some("../x1".into()), ..Default::default() };
    assert!(matches!(run_campaign(CampaignKind::ProbeIps, &cfg, opts), Err(CampaignError::UnknownCampaign(_))));
    let opts = RunOptions { resume: Some("x1".into()), ..Default::default() };
    assert!(matches!(run_campaign(CampaignKind::Traffic, &cfg, opts), Err(CampaignError::ConfigInvalid(_))));
}

#[test]
fn missing_sections_are_config_errors() {
    let cfg = CampaignConfig::default();
    for kind in [CampaignKind::ProbeIps, CampaignKind::ScanDomains, CampaignKind::Grab, CampaignKind::Traffic] {
        assert!(matches!(run_campaign(kind, &cfg, RunOptions::default()), Err(CampaignError::ConfigInvalid(_))));
    }
}

fn traffic_inputs(dir: &std::path::Path) -> TrafficSection {
    std::fs::write(dir.join("prefixes.csv"), "prefix,asn\n198.51.100.0/24,15169\n203.0.113.0/24,20940\n").unwrap();
    std::fs::write(dir.join("operators.txt"), "google: 15169\nakamai: 20940\n").unwrap();
    std::fs::write(
        dir.join("flows.csv"),
        "ts,src,dst,proto,sport,dport,bytes,packets\n\
         0,198.51.100.1,192.168.0.1,udp,443,50000,600,2\n\
         10,198.51.100.1,192.168.0.1,tcp,443,50001,300,1\n\
         20,203.0.113.9,192.168.0.2,tcp,80,50002,100,1\n\
         400,192.0.2.1,192.168.0.3,tcp,443,50003,1000,4\n\
         bad,row\n",
    )
    .unwrap();
    TrafficSection {
        flows: dir.join("flows.csv"),
        prefixes: Some(dir.join("prefixes.csv")),
        operators: Some(dir.join("operators.txt")),
        local_prefixes: vec!["192.168.0.0/16".into()],
        ..TrafficSection::default()
    }
}

#[test]
fn traffic_campaign_writes_series_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = CampaignConfig { traffic: Some(traffic_inputs(dir.path())), ..Default::default() };
    cfg.output.path = Some(dir.path().join("series.csv"));
    let s = run_campaign(CampaignKind::Traffic, &cfg, RunOptions::default()).unwrap();
    assert_eq!(s.skipped, 1);
    assert_eq!(s.emitted, 2, "two five-minute bins");
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert!(series.starts_with("bin_start,protocol,operator,bytes,overall_share\n"), "{series}");
    assert!(series.contains("1970-01-01T00:00:00Z,QUIC,google,600,"), "{series}");
    let table = std::fs::read_to_string(dir.path().join("series.csv.shares.csv")).unwrap();
    assert!(table.starts_with("protocol,operator,bytes,overall_share,operator_share,share_in_protocol\n"));
    assert!(table.lines().any(|l| l.starts_with("HTTPS,other,1000,")), "{table}");
}

#[test]
fn report_campaign_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("scan.jsonl"),
        "{\"addr\":\"192.0.2.1\",\"port\":443,\"verdict\":\"version_negotiation\",\"versions\":[\"Q039\",\"Q035\"],\"rtt_ms\":1.0,\"ts\":\"2017-01-01T00:00:00Z\"}\n\
         {\"addr\":\"192.0.2.2\",\"port\":443,\"verdict\":\"public_reset\",\"versions\":[],\"rtt_ms\":1.0,\"ts\":\"2017-01-01T00:00:00Z\"}\n\
         garbage\n",
    )
    .unwrap();
    std::fs::write(
        d.join("grab.jsonl"),
        "{\"host\":\"192.0.2.1:443\",\"sni\":\"foo.com\",\"status\":\"quic_enabled\",\"version\":\"Q035\",\"scid_hex\":null,\"cert_fingerprints\":[\"aa\"],\"cert_cn\":\"*.google.com\",\"cert_valid\":null,\"rtt_ms\":null}\n",
    )
    .unwrap();
    std::fs::write(
        d.join("hosts.jsonl"),
        "{\"address\":\"203.0.113.5\",\"rdns_name\":\"a1-2.deploy.static.akamaitechnologies.com\"}\n\
         {\"address\":\"198.51.100.7\"}\n",
    )
    .unwrap();
    let traffic = traffic_inputs(d);
    let report = ReportSection {
        version_scans: vec![quic_recon::campaign::DatedScan {
            date: "2017-01-01".parse().unwrap(),
            path: d.join("scan.jsonl"),
        }],
        threshold: None,
        grabs: vec![d.join("grab.jsonl")],
        hosts: Some(d.join("hosts.jsonl")),
        ..ReportSection::default()
    };
    let mut cfg = CampaignConfig { traffic: Some(traffic), report: Some(report), ..Default::default() };
    cfg.output.path = Some(d.join("report"));
    let s = run_campaign(CampaignKind::Report, &cfg, RunOptions::default()).unwrap();
    assert_eq!(s.artifacts.len(), 4);
    let read = |n: &str| std::fs::read_to_string(d.join("report").join(n)).unwrap();
    let sets = read("version_sets.csv");
    assert!(sets.contains("2017-01-01,Q035 Q039,1"), "{sets}");
    assert!(sets.contains("2017-01-01,none,1"), "{sets}");
    assert!(read("cert_clusters.csv").contains("1,aa,*.google.com,1,100.00"));
    let attr = read("attribution.jsonl");
    let ops: Vec<String> = attr
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["operator"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ops, ["akamai", "unknown"]);
    let shares = read("shares.csv");
    assert!(shares.starts_with("protocol,operator,bytes,overall_share,operator_share,share_in_protocol\n"));
}
