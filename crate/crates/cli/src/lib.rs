//! Experiment runner for sub-diffraction change detection: entropy sweeps,
//! CUSUM threshold sweeps and latency ensembles, written as CSV with SVG
//! views.

pub mod config;
pub mod experiments;
pub mod report;
pub mod svg;
pub mod verify;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::info;
use spade_core::Receiver;
use thiserror::Error;

use config::{load_config, ConfigError, ExperimentConfig};
use experiments::ExperimentError;
use report::{ReportError, Reporter};

#[derive(Debug, Parser)]
#[command(name = "spade", version, about = "Quickest change detection below the diffraction limit")]
pub struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding `detector.master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for Monte Carlo ensembles (also `SPADE_WORKERS`).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-photon relative entropies against object size.
    EntropySweep,
    /// Latency and false-alarm statistics against the CUSUM threshold.
    ThresholdSweep,
    /// Mean latency against object size for each receiver.
    LatencyEnsemble,
    /// Fast self-checks; exits with code 4 if any fails.
    Verify,
    /// Export the channel model of one receiver at the configured scenario.
    Channels {
        #[arg(long, value_parser = parse_receiver, default_value = "trispade")]
        receiver: Receiver,
        /// Object size; defaults to `scenario.gamma`.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Print the fully defaulted config as TOML.
    DefaultConfig,
}

fn parse_receiver(s: &str) -> Result<Receiver, String> {
    match s {
        "trispade" => Ok(Receiver::TriSpade),
        "direct" | "direct-imaging" => Ok(Receiver::DirectImaging),
        _ => Err(format!("unknown receiver `{s}` (expected trispade or direct)")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0} of {1} checks failed")]
    VerifyFailed(usize, usize),
    #[error("could not write to stdout: {0}")]
    Stdout(std::io::Error),
}

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Experiment(ExperimentError::Config(_)) => EXIT_CONFIG,
            CliError::Experiment(_) => EXIT_NUMERICAL,
            CliError::VerifyFailed(..) => EXIT_VERIFY,
            CliError::Report(_) | CliError::Stdout(_) => EXIT_OTHER,
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output.directory = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.detector.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one subcommand, writing its output files. Human-readable results
/// (check lines, slopes, written paths) go to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let dir = cfg.output.directory.clone();
    match &cli.command {
        Command::DefaultConfig => {
            write!(out, "{}", cfg.to_toml()).map_err(CliError::Stdout)?;
            return Ok(());
        }
        Command::Verify => {
            let checks = verify::run_checks(&cfg)?;
            for c in &checks {
                writeln!(out, "{c}").map_err(CliError::Stdout)?;
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            return if failed == 0 {
                Ok(())
            } else {
                Err(CliError::VerifyFailed(failed, checks.len()))
            };
        }
        Command::EntropySweep => {
            let s = experiments::entropy_sweep(&cfg)?;
            let mut r = Reporter::new(&dir, &cfg)?;
            r.entropy_sweep(&s)?;
            for sl in &s.slopes {
                let v = sl.slope.map_or("n/a".into(), |v| format!("{v:.4}"));
                writeln!(out, "slope {}: {v}", sl.quantity).map_err(CliError::Stdout)?;
            }
            announce(&r, out)?;
        }
        Command::ThresholdSweep => {
            let s = experiments::threshold_sweep(&cfg, cli.workers)?;
            let mut r = Reporter::new(&dir, &cfg)?;
            r.threshold_sweep(&s)?;
            announce(&r, out)?;
        }
        Command::LatencyEnsemble => {
            let s = experiments::latency_ensemble(&cfg, cli.workers)?;
            let mut r = Reporter::new(&dir, &cfg)?;
            r.latency_ensemble(&s)?;
            announce(&r, out)?;
        }
        Command::Channels { receiver, gamma } => {
            let sc = experiments::scenario_at(&cfg, gamma.unwrap_or(cfg.scenario.gamma))?;
            let cm = experiments::channel_model(&cfg, &sc, *receiver)?;
            let mut r = Reporter::new(&dir, &cfg)?;
            r.channels(&format!("channels_{receiver}.csv"), &cm)?;
            announce(&r, out)?;
        }
    }
    Ok(())
}

fn announce(r: &Reporter, out: &mut dyn Write) -> Result<(), CliError> {
    for p in r.written() {
        info!("wrote {}", p.display());
        writeln!(out, "{}", p.display()).map_err(CliError::Stdout)?;
    }
    Ok(())
}
