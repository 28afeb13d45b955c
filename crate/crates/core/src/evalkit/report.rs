use crate::error::{Error, Result};
use crate::evalkit::metrics::{metrics_from_returns, TRADING_DAYS_PER_YEAR};
use crate::evalkit::runner::{ModelRun, WalkForwardOutcome, MODEL_ORDER};
use crate::evalkit::sensitivity::feature_sensitivity;
use crate::evalkit::ttest::ttest_running_avg_diff;
use crate::policy_net::PolicyParams;
use crate::rl_env::Observation;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Metric table horizons, in trailing years from the last test date.
pub const HORIZON_YEARS: [usize; 3] = [1, 3, 5];

/// Locations of everything the bundle writer produced.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub metrics: Vec<PathBuf>,
    pub ttest: PathBuf,
    pub sensitivity: PathBuf,
    pub allocations: PathBuf,
    pub rank_histogram: PathBuf,
    pub plot_data: Vec<PathBuf>,
}

impl ReportPaths {
    pub fn all(&self) -> Vec<&Path> {
        self.metrics
            .iter()
            .map(PathBuf::as_path)
            .chain([
                self.ttest.as_path(),
                self.sensitivity.as_path(),
                self.allocations.as_path(),
                self.rank_histogram.as_path(),
            ])
            .chain(self.plot_data.iter().map(PathBuf::as_path))
            .collect()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn trailing(returns: &[f64], years: usize) -> &[f64] {
    let n = (years as f64 * TRADING_DAYS_PER_YEAR) as usize;
    if returns.len() > n {
        &returns[returns.len() - n..]
    } else {
        returns
    }
}

fn fmt_stat(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.4}")
    }
}

fn find_model<'a>(models: &'a [ModelRun], name: &str) -> Result<&'a ModelRun> {
    models
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::Config(format!("no model run named '{name}'")))
}

fn validate_comparison(
    models: &[ModelRun],
    strategy_names: &[String],
    rank_counts: &[usize],
) -> Result<()> {
    if models.len() != MODEL_ORDER.len() {
        return Err(Error::Config(format!(
            "expected {} model runs, found {}",
            MODEL_ORDER.len(),
            models.len()
        )));
    }
    if models.iter().any(|m| m.returns.is_empty()) {
        return Err(Error::Config("empty model run in report input".into()));
    }
    let days = models[0].returns.len();
    for name in MODEL_ORDER {
        let run = find_model(models, name)?;
        if run.returns.len() != days || run.dates.len() != days {
            return Err(Error::Misaligned(format!(
                "model {name} covers {} days, expected {days}",
                run.returns.len()
            )));
        }
        if run.allocations.dim() != (days, strategy_names.len()) {
            return Err(Error::Shape(format!(
                "model {name} allocations are {:?}, expected ({days}, {})",
                run.allocations.dim(),
                strategy_names.len()
            )));
        }
    }
    if rank_counts.len() != strategy_names.len() {
        return Err(Error::Shape(format!(
            "{} rank bins for {} strategies",
            rank_counts.len(),
            strategy_names.len()
        )));
    }
    Ok(())
}

fn metrics_table(models: &[ModelRun], years: usize) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# trailing {years}-year model comparison ending {}",
        find_model(models, MODEL_ORDER[0])?
            .dates
            .last()
            .map(|d| d.to_string())
            .unwrap_or_default()
    );
    let _ = writeln!(
        s,
        "# mdd is the maximum drawdown as a negative percent; mdd_over_vol divides it by annualized volatility in percent"
    );
    let _ = writeln!(s, "model,return,sharpe,sortino,mdd,mdd_over_vol");
    for name in MODEL_ORDER {
        let run = find_model(models, name)?;
        let window = trailing(&run.returns, years);
        let m = metrics_from_returns(window)?;
        let _ = writeln!(
            s,
            "{name},{:.4},{:.4},{:.4},{:.4},{:.4}",
            m.annualized_return_pct, m.sharpe, m.sortino, m.max_drawdown_pct, m.mdd_over_vol
        );
    }
    Ok(s)
}

/// Upper-triangular pairwise table: rows test earlier models against later
/// ones, cell format `t (p%)` with `*` marking 5% significance.
fn ttest_table(models: &[ModelRun]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# running-average return difference t-statistics, two-sided p in parentheses, * = p < 5%"
    );
    let cols = &MODEL_ORDER[1..];
    let _ = writeln!(s, "avg_return,{}", cols.join(","));
    for (i, row_name) in MODEL_ORDER[..MODEL_ORDER.len() - 1].iter().enumerate() {
        let row_run = find_model(models, row_name)?;
        let mut line = row_name.to_string();
        for (j, col_name) in cols.iter().enumerate() {
            line.push(',');
            if j < i {
                continue;
            }
            let col_run = find_model(models, col_name)?;
            let r = ttest_running_avg_diff(&row_run.returns, &col_run.returns)?;
            let mark = if r.significant() { "*" } else { "" };
            let _ = write!(
                line,
                "{} ({:.1}%){mark}",
                fmt_stat(r.t_stat),
                r.p_value * 100.0
            );
        }
        let _ = writeln!(s, "{line}");
    }
    Ok(s)
}

/// Ranked feature table for a trained policy over an observation stream, in
/// the same layout the bundle writer uses.
pub fn render_sensitivity_table(
    params: &PolicyParams,
    observations: &[Observation],
    lookback: usize,
) -> Result<String> {
    let report = feature_sensitivity(params, observations, lookback)?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# policy-output sensitivity under trailing {lookback}-observation mean replacement, scaled 0-100"
    );
    let _ = writeln!(s, "rank,feature,raw,score");
    for (i, fs) in report.scores().iter().enumerate() {
        let _ = writeln!(s, "{},{},{:.6e},{:.4}", i + 1, fs.name, fs.raw, fs.scaled);
    }
    Ok(s)
}

fn allocations_table(models: &[ModelRun], strategy_names: &[String]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "date,model,{}", strategy_names.join(","));
    for name in MODEL_ORDER {
        let run = find_model(models, name)?;
        for (t, date) in run.dates.iter().enumerate() {
            let weights: Vec<String> =
                run.allocations.row(t).iter().map(|w| format!("{w:.6}")).collect();
            let _ = writeln!(s, "{date},{name},{}", weights.join(","));
        }
    }
    Ok(s)
}

fn rank_histogram_table(rank_counts: &[usize]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# rank of DRL1's top-weighted strategy among that day's volatility forecasts (1 = lowest forecast)"
    );
    let _ = writeln!(s, "rank,count");
    for (i, c) in rank_counts.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, c);
    }
    s
}

/// Gnuplot-friendly columns: day index, then one cumulative-wealth column per
/// model in [`MODEL_ORDER`].
fn performance_dat(models: &[ModelRun]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# day {}", MODEL_ORDER.join(" "));
    let days = models[0].returns.len();
    let mut wealth = vec![1.0f64; MODEL_ORDER.len()];
    for t in 0..days {
        let _ = write!(s, "{}", t + 1);
        for (m, name) in MODEL_ORDER.iter().enumerate() {
            wealth[m] *= 1.0 + find_model(models, name)?.returns[t];
            let _ = write!(s, " {:.8}", wealth[m]);
        }
        let _ = writeln!(s);
    }
    Ok(s)
}

fn running_avg_dat(models: &[ModelRun]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# day {}", MODEL_ORDER.join(" "));
    let days = models[0].returns.len();
    let mut acc = vec![0.0f64; MODEL_ORDER.len()];
    for t in 0..days {
        let _ = write!(s, "{}", t + 1);
        for (m, name) in MODEL_ORDER.iter().enumerate() {
            acc[m] += find_model(models, name)?.returns[t];
            let _ = write!(s, " {:.8e}", acc[m] / (t + 1) as f64);
        }
        let _ = writeln!(s);
    }
    Ok(s)
}

fn histogram_dat(rank_counts: &[usize]) -> String {
    let mut s = String::from("# rank count\n");
    for (i, c) in rank_counts.iter().enumerate() {
        let _ = writeln!(s, "{} {}", i + 1, c);
    }
    s
}

/// Write every comparison file that derives from the stitched model runs:
/// metric tables per horizon, the significance matrix, allocation
/// trajectories, the forecast-rank histogram, and the gnuplot data files.
/// Everything except the policy sensitivity ranking, which needs the trained
/// parameters and is added by [`write_report_bundle`].
pub fn write_comparison_tables(
    models: &[ModelRun],
    strategy_names: &[String],
    rank_counts: &[usize],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    validate_comparison(models, strategy_names, rank_counts)?;
    fs::create_dir_all(out_dir)?;

    let mut paths = Vec::new();
    for years in HORIZON_YEARS {
        let path = out_dir.join(format!("metrics_{years}y.csv"));
        write_file(&path, &metrics_table(models, years)?)?;
        paths.push(path);
    }
    for (name, contents) in [
        ("ttest.csv", ttest_table(models)?),
        ("allocations.csv", allocations_table(models, strategy_names)?),
        ("rank_histogram.csv", rank_histogram_table(rank_counts)),
        ("performance.dat", performance_dat(models)?),
        ("running_avg.dat", running_avg_dat(models)?),
        ("rank_histogram.dat", histogram_dat(rank_counts)),
    ] {
        let path = out_dir.join(name);
        write_file(&path, &contents)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Write the full comparison bundle into `out_dir` (created if missing):
/// metric tables per horizon, the pairwise significance matrix, the feature
/// sensitivity ranking, allocation trajectories, the forecast-rank histogram,
/// and gnuplot data files.
pub fn write_report_bundle(
    outcome: &WalkForwardOutcome,
    sensitivity_lookback: usize,
    out_dir: &Path,
) -> Result<ReportPaths> {
    write_comparison_tables(
        &outcome.models,
        &outcome.strategy_names,
        &outcome.rank_counts,
        out_dir,
    )?;
    let sensitivity = out_dir.join("sensitivity.csv");
    write_file(
        &sensitivity,
        &render_sensitivity_table(
            &outcome.final_params,
            &outcome.final_observations,
            sensitivity_lookback,
        )?,
    )?;

    Ok(ReportPaths {
        metrics: HORIZON_YEARS
            .iter()
            .map(|y| out_dir.join(format!("metrics_{y}y.csv")))
            .collect(),
        ttest: out_dir.join("ttest.csv"),
        sensitivity,
        allocations: out_dir.join("allocations.csv"),
        rank_histogram: out_dir.join("rank_histogram.csv"),
        plot_data: ["performance.dat", "running_avg.dat", "rank_histogram.dat"]
            .iter()
            .map(|n| out_dir.join(n))
            .collect(),
    })
}
