//! Experiment driver for PDMP thinning simulation and multilevel Monte Carlo.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Config, ConfigStage, EstimatorKind};
use pdmp_core::PdmpError;

#[derive(Parser)]
#[command(name = "pdmp", about = "PDMP thinning simulation and Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: hardware parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Full-scale run: extends the accuracy ladder to 2^-5 and raises the
    /// replication count to 100.
    #[arg(long)]
    full: bool,
    /// Override the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write per-path trajectory time series and the deterministic overlay.
    Simulate(CommonArgs),
    /// Estimate structural parameters and write a config override block.
    Structural(CommonArgs),
    /// Run an estimator over the accuracy ladder and emit the result table.
    RmseTable {
        #[command(flatten)]
        common: CommonArgs,
        /// mc | mlmc-plain | mlmc-case2 | mlmc-case3 (default from config).
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Emit the per-level coupled-difference decay curve with fitted slopes.
    VarianceDecay(CommonArgs),
    /// Write the default Morris-Lecar experiment configuration.
    EmitConfig {
        /// Destination path (stdout when omitted).
        #[arg(long)]
        path: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// Exit codes: 2 for configuration problems, 3 for numerical failures
/// (rate-bound violation, degenerate weight, blow-up), 1 otherwise.
fn classify(err: &anyhow::Error) -> u8 {
    if let Some(pdmp) = err.downcast_ref::<PdmpError>() {
        return match pdmp {
            PdmpError::RateBoundViolation { .. }
            | PdmpError::NumericalFailure { .. }
            | PdmpError::DegenerateWeight(_) => 3,
            PdmpError::InvalidArgument(_) | PdmpError::PlanDegenerate(_) => 2,
        };
    }
    if err.downcast_ref::<toml::de::Error>().is_some() || err.downcast_ref::<ConfigStage>().is_some()
    {
        return 2;
    }
    1
}

fn load_config(common: &CommonArgs) -> Result<(Config, PathBuf)> {
    let mut config = Config::load(&common.config).map_err(|e| e.context(ConfigStage))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(threads) = common.threads {
        config.threads = threads;
    }
    if config.threads > 0 {
        // A later init attempt (e.g. in tests) is fine to ignore.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    let out_dir = common.out.clone().unwrap_or_else(|| config.output_dir.clone());
    Ok((config, out_dir))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let (config, out) = load_config(&common)?;
            commands::simulate(&config, &out)
        }
        Command::Structural(common) => {
            let (config, out) = load_config(&common)?;
            commands::structural(&config, &out)
        }
        Command::RmseTable { common, estimator } => {
            let (config, out) = load_config(&common)?;
            let kind = match estimator.as_deref() {
                None => config.estimator,
                Some("mc") => EstimatorKind::Mc,
                Some("mlmc-plain") => EstimatorKind::MlmcPlain,
                Some("mlmc-case2") => EstimatorKind::MlmcCase2,
                Some("mlmc-case3") => EstimatorKind::MlmcCase3,
                Some(other) => {
                    return Err(anyhow::anyhow!("unknown estimator {other}").context(ConfigStage))
                }
            };
            commands::rmse_table(&config, kind, common.full, &out)
        }
        Command::VarianceDecay(common) => {
            let (config, out) = load_config(&common)?;
            commands::variance_decay(&config, &out)
        }
        Command::EmitConfig { path } => {
            let text = config::default_config_toml();
            match path {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| anyhow::Error::from(e).context("writing config"))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
