use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use quic_recon::campaign::{
    new_campaign_id, run_campaign, CampaignConfig, CampaignError, CampaignKind, OutputFormat, RunOptions,
};

/// Measurement toolkit for legacy Google QUIC deployments.
#[derive(Debug, Parser)]
#[command(name = "quic-recon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probe addresses for QUIC support with a single unsupported-version CHLO.
    ProbeIps(Common),
    /// Resolve and handshake every domain of a zone.
    ScanDomains(Common),
    /// Collect server configs and certificates with a fixed SNI.
    Grab(Common),
    /// Per-operator protocol shares from flow records or a pcap trace.
    Traffic(Common),
    /// Version-set series, certificate clusters, attribution and share tables.
    Report(Common),
    /// Run the probe matrix against local mock responders.
    Selftest(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Campaign configuration (TOML).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Probe packets per second.
    #[arg(long)]
    rate: Option<u32>,
    /// Reply timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Continue an interrupted campaign.
    #[arg(long, value_name = "ID")]
    resume: Option<String>,
    /// Output file (directory for `report`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(OutputFormatArg))]
    format: Option<OutputFormatArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum OutputFormatArg {
    Jsonl,
    Csv,
}

impl From<OutputFormatArg> for OutputFormat {
    fn from(f: OutputFormatArg) -> Self {
        match f {
            OutputFormatArg::Jsonl => OutputFormat::Jsonl,
            OutputFormatArg::Csv => OutputFormat::Csv,
        }
    }
}

impl Command {
    fn split(self) -> (CampaignKind, Common) {
        match self {
            Command::ProbeIps(c) => (CampaignKind::ProbeIps, c),
            Command::ScanDomains(c) => (CampaignKind::ScanDomains, c),
            Command::Grab(c) => (CampaignKind::Grab, c),
            Command::Traffic(c) => (CampaignKind::Traffic, c),
            Command::Report(c) => (CampaignKind::Report, c),
            Command::Selftest(c) => (CampaignKind::Selftest, c),
        }
    }
}

fn load_config(kind: CampaignKind, args: &Common) -> anyhow::Result<CampaignConfig> {
    let mut cfg = match &args.config {
        Some(path) => CampaignConfig::load(path)?,
        None if kind == CampaignKind::Selftest => CampaignConfig::default(),
        None => anyhow::bail!("{kind} needs --config"),
    };
    cfg.apply_env();
    if let Some(rate) = args.rate {
        cfg.probe.get_or_insert_with(Default::default).rate = rate;
    }
    if let Some(secs) = args.timeout {
        let t = Duration::try_from_secs_f64(secs).context("--timeout")?;
        if let Some(p) = &mut cfg.probe {
            p.timeout = t;
        }
        if let Some(d) = &mut cfg.domains {
            d.timeout = t;
        }
        if let Some(g) = &mut cfg.grab {
            g.timeout = t;
        }
        cfg.selftest.get_or_insert_with(Default::default).timeout = t;
    }
    if let Some(out) = &args.out {
        cfg.output.path = Some(std::path::absolute(out)?);
    }
    if let Some(f) = args.format {
        cfg.output.format = f.into();
    }
    Ok(cfg)
}

fn run(kind: CampaignKind, args: Common) -> anyhow::Result<bool> {
    let cfg = load_config(kind, &args)?;
    let id = args.resume.clone().unwrap_or_else(new_campaign_id);
    eprintln!("campaign {id}");
    let opts = RunOptions { resume: args.resume, id: Some(id), hook: None };
    let summary = match run_campaign(kind, &cfg, opts) {
        Ok(s) => s,
        Err(e @ CampaignError::Interrupted(_)) => anyhow::bail!(e),
        Err(e) => return Err(e).with_context(|| format!("{kind} campaign failed")),
    };
    for line in &summary.lines {
        println!("{line}");
    }
    for a in &summary.artifacts {
        eprintln!("wrote {}", a.display());
    }
    eprintln!("{} records, {} skipped inputs", summary.emitted, summary.skipped);
    Ok(summary.failures == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (kind, args) = Cli::parse().command.split();
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: selftest failures");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
