use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use icu_morl_bench::config::{parse_metric, Algorithm, BenchConfig};
use icu_morl_bench::pipeline::{self, Manifest};
use log::{error, info};

#[derive(Parser)]
#[command(name = "morl-bench", version, about = "Offline multi-objective RL benchmark on a synthetic ICU")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Simulate clinician episodes and split them.
    Generate,
    /// Fit the behavior model and every selected learner.
    Train,
    /// Score every (preference, algorithm, metric) cell.
    Evaluate,
    /// Emit tables and plot data from results.csv.
    Report,
    /// Compare every score against the Monte Carlo ground truth.
    Calibrate,
    /// Every stage in order.
    All,
}

#[derive(Args)]
struct Overrides {
    /// Flat TOML config; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single master seed, replacing the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated subset of bc,ddqn,cql,c_cpql,ap_cpql,peda_dt.
    #[arg(long, global = true, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// Comma-separated subset of wis,fqe.
    #[arg(long, global = true, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    #[arg(long, global = true)]
    sweep_step: Option<f64>,
}

impl Overrides {
    fn resolve(&self) -> Result<BenchConfig> {
        let mut cfg = match &self.config {
            Some(path) => BenchConfig::load(path)?,
            None => BenchConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(list) = &self.algorithms {
            cfg.algorithms = list.iter().map(|s| s.parse::<Algorithm>()).collect::<Result<_>>()?;
        }
        if let Some(list) = &self.metrics {
            cfg.metrics = list.iter().map(|s| parse_metric(s)).collect::<Result<_>>()?;
        }
        if let Some(step) = self.sweep_step {
            cfg.sweep_step = step;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = cli.overrides.resolve()?;
    let mut manifest = Manifest::load_or_new(&cfg)?;
    let stage = |name: &str, manifest: &mut Manifest| -> Result<()> {
        info!("{name} done");
        manifest.record(&cfg, name)
    };
    let mut failed = false;
    match cli.command {
        Command::Generate => {
            pipeline::generate(&cfg)?;
            stage("generate", &mut manifest)?;
        }
        Command::Train => {
            pipeline::train(&cfg)?;
            stage("train", &mut manifest)?;
        }
        Command::Evaluate => {
            let (_, failures) = pipeline::evaluate(&cfg)?;
            failed = !failures.is_empty();
            manifest.failures = failures;
            stage("evaluate", &mut manifest)?;
        }
        Command::Report => {
            pipeline::report(&cfg)?;
            stage("report", &mut manifest)?;
        }
        Command::Calibrate => {
            pipeline::calibrate(&cfg)?;
            stage("calibrate", &mut manifest)?;
        }
        Command::All => {
            let summary = pipeline::run_all(&cfg)?;
            failed = !summary.failures.is_empty();
        }
    }
    if failed {
        error!("some cells failed; see manifest.json");
    }
    Ok(!failed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
