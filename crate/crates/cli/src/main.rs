use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use parity_forecast::debias::DebiasMethod;
use parity_forecast::Result;
use parity_forecast_cli::{commands, ExperimentConfig, VERSION};

#[derive(Parser)]
#[command(name = "parity-forecast", about = "De-biased quantile forecasting and error-parity audits")]
#[command(version = VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (flat `key = value` file).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to a subdirectory of the configured `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel as CSV files.
    Synth {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a forecaster with the chosen de-biasing method.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = DebiasMethod::NAMES)]
        method: Option<String>,
    },
    /// Audit trained checkpoints on their test windows.
    Audit {
        /// Configuration selecting the panel and split; defaults to each
        /// checkpoint's embedded configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Combine existing audit reports into one set of tables.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// `report.json` files or directories holding one.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn resolve(run: &RunArgs, method: Option<&str>) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let mut cfg = load(run.config.as_deref())?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(m) = method {
        cfg.method = m.to_owned();
    }
    Ok((cfg.resolve()?, run.out.clone()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { run } => {
            let (cfg, out) = resolve(&run, None)?;
            let out = out.unwrap_or_else(|| cfg.out_dir.join("panel"));
            commands::synth(&cfg, &out)
        }
        Command::Train { run, method } => {
            let (cfg, out) = resolve(&run, method.as_deref())?;
            let out = out.unwrap_or_else(|| cfg.out_dir.join(&cfg.method));
            commands::train(&cfg, &out).map(drop)
        }
        Command::Audit { config, out, checkpoints } => {
            let cfg = config.as_deref().map(|p| load(Some(p))?.resolve()).transpose()?;
            let out = out.unwrap_or_else(|| cfg.as_ref().map_or_else(|| PathBuf::from("runs"), |c| c.out_dir.clone()).join("audit"));
            commands::audit(cfg.as_ref(), &checkpoints, &out).map(drop)
        }
        Command::Report { out, reports } => commands::report(&reports, &out).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PARITY_FORECAST_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
