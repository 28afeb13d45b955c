//! `vt-lab`: volatility-targeting strategy lab.
//!
//! Simulate or load a market, forecast its volatility with nine model-based
//! estimators, wrap each forecast in a volatility-targeting strategy, train
//! a convolutional allocation policy over the strategies, and compare it
//! against reference allocators in an anchored walk-forward evaluation.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use vt_lab_core::evalkit::MODEL_ORDER;

#[derive(Parser)]
#[command(
    name = "vt-lab",
    version,
    about = "Volatility-targeting strategy lab",
    arg_required_else_help = true
)]
struct Cli {
    /// TOML run configuration; built-in synthetic defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the config's global seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated model list. Forecaster names for forecast, backtest,
    /// train, and sensitivity; comparison strategies (drl1, drl2, average,
    /// markowitz, winner) for walkforward and report.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    models: Option<Vec<String>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic market (returns, context, implied, true vol) as CSV.
    Simulate,
    /// Run the volatility forecasters and write the forecast panel.
    Forecast,
    /// Build volatility-targeted strategies and summarize their metrics.
    Backtest,
    /// Train the allocation policy on data before the first test year.
    Train,
    /// Anchored walk-forward comparison ending in a full report bundle.
    Walkforward,
    /// Rank a trained policy's input features by output sensitivity.
    Sensitivity,
    /// Rebuild report tables from a finished walk-forward run's artifacts.
    Report,
}

/// Replace the configured forecaster list with the `--models` override.
fn apply_forecaster_override(cfg: &mut config::RunConfig, names: &[String]) -> Result<()> {
    let mut models = Vec::with_capacity(names.len());
    for name in names {
        let kind = config::parse_model_kind(name.trim())?;
        if models.contains(&kind) {
            bail!("--models lists '{}' twice", kind.name());
        }
        models.push(kind);
    }
    if models.is_empty() {
        bail!("--models must name at least one model");
    }
    cfg.forecast.models = models;
    Ok(())
}

/// The comparison layout is fixed: `--models` may reorder or re-case the
/// five strategy names but not drop any.
fn check_comparison_override(names: &[String]) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for name in names {
        let canon = MODEL_ORDER
            .iter()
            .find(|m| m.eq_ignore_ascii_case(name.trim()))
            .copied()
            .ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown comparison model '{name}'; expected one of {}",
                    MODEL_ORDER.join(", ").to_lowercase()
                )
            })?;
        if seen.contains(&canon) {
            bail!("--models lists '{}' twice", canon.to_lowercase());
        }
        seen.push(canon);
    }
    if seen.len() != MODEL_ORDER.len() {
        bail!(
            "the comparison reports all {} strategies; --models must name {}",
            MODEL_ORDER.len(),
            MODEL_ORDER.join(", ").to_lowercase()
        );
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let threads = commands::thread_cap()?;
    let mut cfg = config::load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = Some(out);
    }
    if let Some(models) = &cli.models {
        match cli.command {
            Command::Forecast | Command::Backtest | Command::Train | Command::Sensitivity => {
                apply_forecaster_override(&mut cfg, models)?;
            }
            Command::Walkforward | Command::Report => check_comparison_override(models)?,
            Command::Simulate => bail!("simulate does not take --models"),
        }
    }

    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Forecast => commands::forecast(&cfg),
        Command::Backtest => commands::backtest(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Walkforward => commands::walkforward(&cfg, threads),
        Command::Sensitivity => commands::sensitivity(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
