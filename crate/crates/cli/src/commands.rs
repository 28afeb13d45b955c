//! One function per subcommand. Each validates the full configuration
//! before touching the filesystem, then prints one line per artifact.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Datelike, NaiveDate};
use ndarray::Array2;
use vt_lab_core::evalkit::{
    metrics_from_returns, render_sensitivity_table, run_walk_forward_threaded,
    write_comparison_tables, write_report_bundle, ModelRun, WalkForwardData, MODEL_ORDER,
};
use vt_lab_core::market_data::{
    load_panel_csv, load_returns_csv, simulate_market, write_panel_csv, write_returns_csv,
    ReturnSeries, SeriesPanel,
};
use vt_lab_core::policy_net::{load_checkpoint, save_checkpoint};
use vt_lab_core::rl_env::{Observation, PortfolioEnv, DERIVED_CONTEXT_ROWS};
use vt_lab_core::train::{train_policy, write_training_log};
use vt_lab_core::vol_forecast::{forecast_all, ForecastInputs};
use vt_lab_core::vol_target::{build_strategy_panel, StrategyPanel};

use crate::config::{DataSource, RunConfig};

/// Parallelism cap from the `VT_LAB_THREADS` environment variable; 1 when
/// unset. Malformed values are configuration errors.
pub fn thread_cap() -> Result<usize> {
    match std::env::var("VT_LAB_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Err(e) => bail!("VT_LAB_THREADS is not valid unicode: {e}"),
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .with_context(|| format!("VT_LAB_THREADS must be a positive integer, got {raw:?}"))?;
            if n == 0 {
                bail!("VT_LAB_THREADS must be at least 1");
            }
            Ok(n)
        }
    }
}

/// Market inputs after loading or simulation.
pub struct LoadedData {
    pub returns: ReturnSeries,
    pub context: Option<SeriesPanel>,
    pub implied: Option<SeriesPanel>,
}

fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    match cfg.data.source {
        DataSource::Synthetic => {
            let market = simulate_market(&cfg.market_config())?;
            let implied =
                (cfg.synthetic.n_implied > 0).then(|| market.implied().clone());
            Ok(LoadedData {
                returns: market.returns().clone(),
                context: Some(market.context().clone()),
                implied,
            })
        }
        DataSource::Csv => {
            let path = cfg
                .data
                .returns_csv
                .as_ref()
                .context("[data] source = \"csv\" requires returns_csv")?;
            let returns = load_returns_csv(path, &cfg.data.returns_column)?;
            let load_aligned = |label: &str, p: &PathBuf| -> Result<SeriesPanel> {
                let panel = load_panel_csv(p)?;
                if panel.dates() != returns.dates() {
                    bail!(
                        "{label} {} does not share the return dates ({} rows vs {})",
                        p.display(),
                        panel.n_rows(),
                        returns.len()
                    );
                }
                Ok(panel)
            };
            let context = match &cfg.data.context_csv {
                Some(p) => Some(load_aligned("context_csv", p)?),
                None => None,
            };
            let implied = match &cfg.data.implied_csv {
                Some(p) => Some(load_aligned("implied_csv", p)?),
                None => None,
            };
            Ok(LoadedData { returns, context, implied })
        }
    }
}

fn report_written(path: &Path) {
    println!("wrote {}", path.display());
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.data.source != DataSource::Synthetic {
        bail!("simulate needs [data] source = \"synthetic\"");
    }
    let market = simulate_market(&cfg.market_config())?;
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;

    let returns_path = dir.join("returns.csv");
    write_returns_csv(market.returns(), &cfg.data.returns_column, &returns_path)?;
    report_written(&returns_path);
    let context_path = dir.join("context.csv");
    write_panel_csv(market.context(), &context_path)?;
    report_written(&context_path);
    if cfg.synthetic.n_implied > 0 {
        let implied_path = dir.join("implied.csv");
        write_panel_csv(market.implied(), &implied_path)?;
        report_written(&implied_path);
    }
    let vol_path = dir.join("true_vol.csv");
    write_panel_csv(&market.true_vol().to_panel("true_vol"), &vol_path)?;
    report_written(&vol_path);
    println!(
        "simulated {} days over {} regime(s), seed {}",
        cfg.synthetic.n_days,
        cfg.synthetic.regimes.len(),
        cfg.synthetic.seed.unwrap_or(cfg.seed)
    );
    Ok(())
}

pub fn forecast(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    cfg.validate_forecast_inputs()?;
    let data = load_data(cfg)?;
    let inputs = ForecastInputs { returns: &data.returns, implied: data.implied.as_ref() };
    let panel = forecast_all(&cfg.forecast_config(), &inputs, None)?;
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    let path = dir.join("forecasts.csv");
    write_panel_csv(&panel, &path)?;
    report_written(&path);
    println!("{} forecast columns x {} rows", panel.n_cols(), panel.n_rows());
    Ok(())
}

pub fn backtest(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    cfg.validate_forecast_inputs()?;
    let data = load_data(cfg)?;
    let inputs = ForecastInputs { returns: &data.returns, implied: data.implied.as_ref() };
    let forecasts = forecast_all(&cfg.forecast_config(), &inputs, None)?;
    let panel = build_strategy_panel(&forecasts, &data.returns, &cfg.target_config())?;

    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    let returns_path = dir.join("strategy_returns.csv");
    write_panel_csv(&panel.returns_panel(), &returns_path)?;
    report_written(&returns_path);
    let prices_path = dir.join("strategy_prices.csv");
    write_panel_csv(&panel.prices_panel(), &prices_path)?;
    report_written(&prices_path);

    let mut summary = String::from("strategy,return,sharpe,sortino,mdd,mdd_over_vol\n");
    for (j, name) in panel.names().iter().enumerate() {
        // Row 0 is the base row (zero return, unit price); metrics start
        // from the first traded day.
        let rets: Vec<f64> = (1..panel.len()).map(|t| panel.returns()[[t, j]]).collect();
        let m = metrics_from_returns(&rets)
            .with_context(|| format!("metrics for strategy {name}"))?;
        summary.push_str(&format!(
            "{name},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            m.annualized_return_pct, m.sharpe, m.sortino, m.max_drawdown_pct, m.mdd_over_vol
        ));
    }
    let summary_path = dir.join("strategy_metrics.csv");
    fs::write(&summary_path, summary)?;
    report_written(&summary_path);
    Ok(())
}

/// Context rows matched one-to-one with the strategy panel's dates.
fn aligned_context(
    context: Option<&SeriesPanel>,
    panel: &StrategyPanel,
) -> Result<Option<SeriesPanel>> {
    let Some(ctx) = context else { return Ok(None) };
    let base = panel.dates()[0];
    let c0 = ctx
        .index_of(base)
        .with_context(|| format!("context has no row for the panel base date {base}"))?;
    if ctx.n_rows() < c0 + panel.len() {
        bail!(
            "context ends before the strategy panel does ({} rows, need {})",
            ctx.n_rows(),
            c0 + panel.len()
        );
    }
    Ok(Some(ctx.slice_rows(c0, c0 + panel.len())))
}

/// Last return date strictly before the first test year, i.e. the training
/// boundary a later walk-forward run would use for its first split.
fn training_boundary(returns: &ReturnSeries, first_test_year: i32) -> Result<NaiveDate> {
    returns
        .dates()
        .iter()
        .rev()
        .find(|d| d.year() < first_test_year)
        .copied()
        .with_context(|| format!("no data before the first test year {first_test_year}"))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    cfg.validate_forecast_inputs()?;
    let data = load_data(cfg)?;
    let boundary = training_boundary(&data.returns, cfg.walkforward.first_test_year)?;

    let returns = data.returns.up_to(boundary);
    let implied = data.implied.as_ref().map(|p| p.up_to(boundary));
    let inputs = ForecastInputs { returns: &returns, implied: implied.as_ref() };
    let forecasts = forecast_all(&cfg.forecast_config(), &inputs, None)?;
    let panel = build_strategy_panel(&forecasts, &returns, &cfg.target_config())?;
    let context = aligned_context(
        data.context.as_ref().map(|c| c.up_to(boundary)).as_ref(),
        &panel,
    )?;

    let ctx_rows = context.as_ref().map_or(0, |c| c.n_cols()) + DERIVED_CONTEXT_ROWS;
    let arch = cfg.arch(panel.n_strategies(), ctx_rows);
    let env = PortfolioEnv::new(&panel, context.as_ref(), cfg.env_config())?;
    println!(
        "training on {} strategies x {} steps through {boundary}",
        panel.n_strategies(),
        env.horizon()
    );
    let report = train_policy(&env, &arch, &cfg.train_config())?;

    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    let ckpt = dir.join("policy.bin");
    save_checkpoint(&ckpt, &report.best_params)?;
    report_written(&ckpt);
    let log = dir.join("training_log.csv");
    write_training_log(&log, &report)?;
    report_written(&log);
    println!(
        "best reward {:.6} at episode {} of {} ({:?} after {} env steps)",
        report.best_reward,
        report.best_episode + 1,
        report.episode_rewards.len(),
        report.stop,
        report.steps_used
    );
    Ok(())
}

pub fn walkforward(cfg: &RunConfig, threads: usize) -> Result<()> {
    cfg.validate()?;
    cfg.validate_forecast_inputs()?;
    let data = load_data(cfg)?;
    let context_cols = data.context.as_ref().map_or(0, |c| c.n_cols());
    let wf = cfg.walk_forward_config(context_cols);
    let wdata = WalkForwardData {
        returns: &data.returns,
        context: data.context.as_ref(),
        implied: data.implied.as_ref(),
    };
    let outcome = run_walk_forward_threaded(&wdata, &wf, threads)?;

    let dir = cfg.output_dir();
    let paths = write_report_bundle(&outcome, cfg.sensitivity.lookback, &dir)?;
    for p in paths.all() {
        report_written(p);
    }

    let drl1 = outcome.model(MODEL_ORDER[0])?;
    let n_days = drl1.returns.len();
    let mut stitched = Array2::zeros((n_days, MODEL_ORDER.len()));
    for (j, name) in MODEL_ORDER.iter().enumerate() {
        for (t, r) in outcome.model(name)?.returns.iter().enumerate() {
            stitched[[t, j]] = *r;
        }
    }
    let oos = SeriesPanel::new(
        drl1.dates.clone(),
        MODEL_ORDER.iter().map(|s| s.to_string()).collect(),
        stitched,
    )?;
    let oos_path = dir.join("oos_returns.csv");
    write_panel_csv(&oos, &oos_path)?;
    report_written(&oos_path);

    let ckpt = dir.join("policy.bin");
    save_checkpoint(&ckpt, &outcome.final_params)?;
    report_written(&ckpt);

    let mut audit = String::from("phase,last_date,boundary,label,violation\n");
    for rec in &outcome.access_log {
        audit.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.phase,
            rec.last_date,
            rec.boundary,
            rec.label,
            rec.is_violation()
        ));
    }
    let audit_path = dir.join("audit.csv");
    fs::write(&audit_path, audit)?;
    report_written(&audit_path);

    println!(
        "{} splits, {} evaluation days, {} audited reads, 0 violations",
        outcome.splits.len(),
        n_days,
        outcome.access_log.len()
    );
    Ok(())
}

pub fn sensitivity(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    cfg.validate_forecast_inputs()?;
    let dir = cfg.output_dir();
    let ckpt = cfg.sensitivity.checkpoint.clone().unwrap_or_else(|| dir.join("policy.bin"));
    if !ckpt.exists() {
        bail!(
            "checkpoint {} not found; train a policy first (train or walkforward)",
            ckpt.display()
        );
    }
    let params = load_checkpoint(&ckpt)?;
    let arch = params.arch().clone();

    let data = load_data(cfg)?;
    let inputs = ForecastInputs { returns: &data.returns, implied: data.implied.as_ref() };
    let forecasts = forecast_all(&cfg.forecast_config(), &inputs, None)?;
    let panel = build_strategy_panel(&forecasts, &data.returns, &cfg.target_config())?;
    let context = aligned_context(data.context.as_ref(), &panel)?;
    let ctx_rows = context.as_ref().map_or(0, |c| c.n_cols()) + DERIVED_CONTEXT_ROWS;
    if arch.n_assets != panel.n_strategies() || arch.context_rows != ctx_rows {
        bail!(
            "checkpoint expects {} assets x {} context rows, data provides {} x {ctx_rows}",
            arch.n_assets,
            arch.context_rows,
            panel.n_strategies()
        );
    }

    // Observation windows must match the checkpoint, whatever [env] says now.
    let mut env_cfg = cfg.env_config();
    env_cfg.window = arch.window;
    let env = PortfolioEnv::new(&panel, context.as_ref(), env_cfg)?;
    let first = env.start() - 1;
    let last = panel.len() - 1;
    let lo = first.max((last + 1).saturating_sub(cfg.sensitivity.stream_days));
    let observations: Vec<Observation> =
        (lo..=last).map(|t| env.observation_at(t)).collect::<vt_lab_core::Result<_>>()?;

    let table = render_sensitivity_table(&params, &observations, cfg.sensitivity.lookback)?;
    fs::create_dir_all(&dir)?;
    let path = dir.join("sensitivity.csv");
    fs::write(&path, table)?;
    report_written(&path);
    println!(
        "scored {} decision days ending {}",
        observations.len(),
        panel.dates()[last]
    );
    Ok(())
}

fn artifact(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if !p.exists() {
        bail!("missing artifact {}; run walkforward first", p.display());
    }
    Ok(p)
}

/// Allocation trajectories keyed by model, plus the strategy names, read
/// back from a bundle's allocations.csv.
fn read_allocations(
    path: &Path,
) -> Result<(Vec<String>, HashMap<String, Vec<(NaiveDate, Vec<f64>)>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "date" || &headers[1] != "model" {
        bail!("{} does not look like an allocations table", path.display());
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut by_model: HashMap<String, Vec<(NaiveDate, Vec<f64>)>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .with_context(|| format!("bad date {:?} in {}", &record[0], path.display()))?;
        let weights: Vec<f64> = record
            .iter()
            .skip(2)
            .map(|w| w.parse::<f64>().map_err(anyhow::Error::from))
            .collect::<Result<_>>()?;
        by_model.entry(record[1].to_string()).or_default().push((date, weights));
    }
    Ok((names, by_model))
}

fn read_rank_counts(path: &Path) -> Result<Vec<usize>> {
    let mut reader =
        csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut counts = Vec::new();
    for record in reader.records() {
        let record = record?;
        counts.push(record[1].parse::<usize>()?);
    }
    Ok(counts)
}

/// Rebuild every derived table of an existing walk-forward run from its raw
/// artifacts, in place. The sensitivity ranking needs the trained policy and
/// observation stream, so it is left untouched.
pub fn report(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let dir = cfg.output_dir();
    let oos_path = artifact(&dir, "oos_returns.csv")?;
    let alloc_path = artifact(&dir, "allocations.csv")?;
    let rank_path = artifact(&dir, "rank_histogram.csv")?;
    artifact(&dir, "sensitivity.csv")?;

    let oos = load_panel_csv(&oos_path)?;
    if oos.names() != &MODEL_ORDER[..] {
        bail!(
            "{} has columns {:?}, expected {:?}",
            oos_path.display(),
            oos.names(),
            MODEL_ORDER
        );
    }
    let (strategy_names, mut by_model) = read_allocations(&alloc_path)?;
    let rank_counts = read_rank_counts(&rank_path)?;

    let mut models = Vec::new();
    for (j, name) in MODEL_ORDER.iter().enumerate() {
        let rows = by_model
            .remove(*name)
            .with_context(|| format!("{} has no rows for {name}", alloc_path.display()))?;
        if rows.len() != oos.n_rows() {
            bail!(
                "{name} has {} allocation rows but {} return rows",
                rows.len(),
                oos.n_rows()
            );
        }
        let mut allocations = Array2::zeros((rows.len(), strategy_names.len()));
        for (t, (date, weights)) in rows.iter().enumerate() {
            if *date != oos.dates()[t] {
                bail!("{name} allocations and returns disagree at row {t}");
            }
            for (k, w) in weights.iter().enumerate() {
                allocations[[t, k]] = *w;
            }
        }
        models.push(ModelRun {
            name: (*name).to_string(),
            dates: oos.dates().to_vec(),
            returns: (0..oos.n_rows()).map(|t| oos.values()[[t, j]]).collect(),
            allocations,
        });
    }

    let paths = write_comparison_tables(&models, &strategy_names, &rank_counts, &dir)?;
    for p in &paths {
        report_written(p);
    }
    Ok(())
}
