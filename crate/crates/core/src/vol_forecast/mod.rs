//! Volatility forecasting models.
//!
//! Every model produces a [`ForecastSeries`]: a dated series of predicted
//! daily volatility where the value dated t was computed from information
//! available through t-1 only. Construction goes through a single floor-and-
//! validate path so downstream leverage can never divide by zero.

pub mod garch;
pub mod har;
pub mod heavy;

use crate::error::{Error, Result};
use crate::market_data::{align, DatedSeries, ReturnSeries, SeriesPanel};
use chrono::NaiveDate;
use ndarray::Array2;

pub use garch::{fit_garch, garch_filter, gaussian_loglik, GarchParams};
pub use har::{fit_har, har_forecast, HarFit, HarParams};
pub use heavy::{fit_heavy, heavy_filter, heavy_forecast, HeavyParams};

/// Minimum daily volatility a forecast may report. Keeps target leverage
/// finite everywhere downstream.
pub const VOL_FLOOR: f64 = 1e-5;

/// Observations used to seed recursive forecasts and as the default
/// moving-average window.
pub const DEFAULT_VOL_WINDOW: usize = 20;

/// A strictly lagged daily-volatility prediction series.
///
/// Invariants: every value is finite and at least [`VOL_FLOOR`], and the value
/// dated t was produced from data through t-1. The latter is a property of the
/// constructors in this module; this type only carries the result.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    inner: DatedSeries,
}

impl ForecastSeries {
    /// Floor raw predictions at [`VOL_FLOOR`] and wrap them. Non-finite
    /// predictions are rejected rather than floored.
    pub fn from_raw(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite volatility forecast".into()));
        }
        let floored = values.into_iter().map(|v| v.max(VOL_FLOOR)).collect();
        Ok(Self { inner: DatedSeries::new(dates, floored)? })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        self.inner.dates()
    }

    pub fn values(&self) -> &[f64] {
        self.inner.values()
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn as_series(&self) -> &DatedSeries {
        &self.inner
    }

    pub fn to_panel(&self, name: &str) -> SeriesPanel {
        self.inner.to_panel(name)
    }
}

fn expanding_mean(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        out.push(sum / (i + 1) as f64);
    }
    out
}

/// Realized variance measure from daily data: squared demeaned returns
/// averaged over the trailing `window` days (truncated at the start).
///
/// Demeaning uses the expanding mean so the measure at date t depends only on
/// returns through t. Clamped away from zero so it can seed multiplicative
/// recursions.
pub fn realized_measure(returns: &ReturnSeries, window: usize) -> Result<DatedSeries> {
    if window == 0 {
        return Err(Error::Config("realized measure window must be positive".into()));
    }
    if returns.is_empty() {
        return Err(Error::TooShort { need: 1, have: 0 });
    }
    let r = returns.values();
    let means = expanding_mean(r);
    let sq: Vec<f64> = r.iter().zip(&means).map(|(x, m)| (x - m) * (x - m)).collect();
    let mut out = Vec::with_capacity(r.len());
    for t in 0..sq.len() {
        let lo = (t + 1).saturating_sub(window);
        let w = &sq[lo..=t];
        let rm = w.iter().sum::<f64>() / w.len() as f64;
        out.push(rm.max(VOL_FLOOR * VOL_FLOOR));
    }
    DatedSeries::new(returns.dates().to_vec(), out)
}

/// Square root of [`realized_measure`]: the realized daily-volatility proxy
/// consumed by the HAR regression and the implied-index rescalers.
pub fn realized_vol_proxy(returns: &ReturnSeries, window: usize) -> Result<DatedSeries> {
    let rm = realized_measure(returns, window)?;
    let vol = rm.values().iter().map(|v| v.sqrt().max(VOL_FLOOR)).collect();
    DatedSeries::new(rm.dates().to_vec(), vol)
}

/// Trailing-window standard deviation as the volatility prediction: the value
/// dated t is the sample std of returns over [t-window, t-1].
pub fn moving_average_forecast(returns: &ReturnSeries, window: usize) -> Result<ForecastSeries> {
    if window < 2 {
        return Err(Error::Config("moving average window must be at least 2".into()));
    }
    if returns.len() <= window {
        return Err(Error::TooShort { need: window + 1, have: returns.len() });
    }
    let r = returns.values();
    let mut dates = Vec::with_capacity(r.len() - window);
    let mut vals = Vec::with_capacity(r.len() - window);
    for t in window..r.len() {
        dates.push(returns.dates()[t]);
        vals.push(crate::market_data::window_std(&r[t - window..t]));
    }
    ForecastSeries::from_raw(dates, vals)
}

/// Two-step level-shift model. Step one detects a shift by comparing the
/// short-window std against a lagged long-window reference that excludes the
/// most recent `short_window` days, so a fresh shift cannot contaminate its
/// own reference; the detector fires when the log of that ratio exceeds
/// `jump_threshold` in magnitude. Step two re-levels: while the detector is
/// on the forecast jumps to the short-window estimate, otherwise it stays at
/// the ordinary trailing long-window std.
pub fn level_shift_forecast(
    returns: &ReturnSeries,
    short_window: usize,
    long_window: usize,
    jump_threshold: f64,
) -> Result<ForecastSeries> {
    if short_window < 2 || long_window <= short_window {
        return Err(Error::Config(format!(
            "level shift windows must satisfy long > short >= 2, got {short_window}/{long_window}"
        )));
    }
    if !(jump_threshold >= 0.0) {
        return Err(Error::Config("jump threshold must be nonnegative".into()));
    }
    let burn_in = long_window + short_window;
    if returns.len() <= burn_in {
        return Err(Error::TooShort { need: burn_in + 1, have: returns.len() });
    }
    let r = returns.values();
    let mut dates = Vec::with_capacity(r.len() - burn_in);
    let mut vals = Vec::with_capacity(r.len() - burn_in);
    for t in burn_in..r.len() {
        let baseline = crate::market_data::window_std(&r[t - long_window..t]);
        let short = crate::market_data::window_std(&r[t - short_window..t]);
        let reference = crate::market_data::window_std(&r[t - burn_in..t - short_window]);
        let gap = (short.max(VOL_FLOOR) / reference.max(VOL_FLOOR)).ln().abs();
        dates.push(returns.dates()[t]);
        vals.push(if gap > jump_threshold { short } else { baseline });
    }
    ForecastSeries::from_raw(dates, vals)
}

/// Exponentially weighted moving-average variance:
/// sigma^2_t = lambda sigma^2_{t-1} + (1-lambda) eps^2_{t-1},
/// seeded with the sample variance of the first [`DEFAULT_VOL_WINDOW`] days.
/// Returns are demeaned with the seed-window mean, which is fixed once the
/// seed window has passed so every prediction stays strictly lagged.
pub fn ewma_forecast(returns: &ReturnSeries, lambda: f64) -> Result<ForecastSeries> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Config(format!("EWMA decay must lie in (0,1), got {lambda}")));
    }
    let seed = DEFAULT_VOL_WINDOW;
    if returns.len() <= seed {
        return Err(Error::TooShort { need: seed + 1, have: returns.len() });
    }
    let r = returns.values();
    let mean = r[..seed].iter().sum::<f64>() / seed as f64;
    let seed_var = r[..seed].iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (seed - 1) as f64;
    let mut dates = Vec::with_capacity(r.len() - seed);
    let mut vals = Vec::with_capacity(r.len() - seed);
    let mut var = seed_var.max(VOL_FLOOR * VOL_FLOOR);
    dates.push(returns.dates()[seed]);
    vals.push(var.sqrt());
    for t in seed + 1..r.len() {
        let eps = r[t - 1] - mean;
        var = lambda * var + (1.0 - lambda) * eps * eps;
        dates.push(returns.dates()[t]);
        vals.push(var.sqrt());
    }
    ForecastSeries::from_raw(dates, vals)
}

fn trailing_mean(values: &[f64], t: usize, lookback: usize) -> f64 {
    values[t - lookback..t].iter().sum::<f64>() / lookback as f64
}

/// Implied-index forecast rescaled to the realized level:
/// sigma_pred(t) = IV_{t-1} * mean(realized over last lookback)
///                        / mean(IV over last lookback).
pub fn implied_adjusted_forecast(
    implied: &DatedSeries,
    realized_vol: &DatedSeries,
    lookback: usize,
) -> Result<ForecastSeries> {
    if lookback < 20 {
        return Err(Error::Config(format!("implied lookback must be >= 20, got {lookback}")));
    }
    if implied.dates() != realized_vol.dates() {
        return Err(Error::Misaligned("implied index and realized vol dates differ".into()));
    }
    if implied.values().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("implied index must be strictly positive".into()));
    }
    if implied.len() <= lookback {
        return Err(Error::TooShort { need: lookback + 1, have: implied.len() });
    }
    let iv = implied.values();
    let rv = realized_vol.values();
    let mut dates = Vec::with_capacity(iv.len() - lookback);
    let mut vals = Vec::with_capacity(iv.len() - lookback);
    for t in lookback..iv.len() {
        let scale = trailing_mean(rv, t, lookback) / trailing_mean(iv, t, lookback);
        dates.push(implied.dates()[t]);
        vals.push(iv[t - 1] * scale);
    }
    ForecastSeries::from_raw(dates, vals)
}

/// Diagnostics from [`pca_implied_forecast`]: how much of the trailing-window
/// variance the first principal component carried.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaDiagnostics {
    /// Mean over time of lambda_1 / trace of the standardized covariance.
    pub mean_explained_ratio: f64,
    /// Worst single-window explained ratio.
    pub min_explained_ratio: f64,
    /// Set when the mean ratio is below 1.5/k, i.e. the panel behaves like
    /// uncorrelated noise rather than a common volatility factor.
    pub low_signal: bool,
}

/// Composite implied-volatility forecast: collapse the implied panel to its
/// first principal component over a trailing window, rebuild a composite
/// index from the component, and rescale it to the realized level exactly as
/// in [`implied_adjusted_forecast`].
pub fn pca_implied_forecast(
    implied_panel: &SeriesPanel,
    realized_vol: &DatedSeries,
    lookback: usize,
) -> Result<(ForecastSeries, PcaDiagnostics)> {
    let k = implied_panel.n_cols();
    if k < 2 {
        return Err(Error::Config("PCA needs at least 2 implied columns".into()));
    }
    if lookback < k.max(20) {
        return Err(Error::Config(format!(
            "PCA lookback {lookback} too short for {k} columns"
        )));
    }
    if implied_panel.dates() != realized_vol.dates() {
        return Err(Error::Misaligned("implied panel and realized vol dates differ".into()));
    }
    let n = implied_panel.n_rows();
    if n <= lookback {
        return Err(Error::TooShort { need: lookback + 1, have: n });
    }
    let iv = implied_panel.values();
    if iv.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("implied panel must be strictly positive".into()));
    }
    let rv = realized_vol.values();

    let l = lookback as f64;
    let mut dates = Vec::with_capacity(n - lookback);
    let mut vals = Vec::with_capacity(n - lookback);
    let mut ratio_sum = 0.0;
    let mut ratio_min = f64::INFINITY;
    for t in lookback..n {
        let window = iv.slice(ndarray::s![t - lookback..t, ..]);
        let mut means = vec![0.0; k];
        let mut stds = vec![0.0; k];
        for j in 0..k {
            let col = window.column(j);
            let m = col.sum() / l;
            let ss = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            let sd = (ss / (l - 1.0)).sqrt();
            if sd < 1e-12 {
                return Err(Error::Singular(format!(
                    "implied column {j} is constant over the window ending at row {t}"
                )));
            }
            means[j] = m;
            stds[j] = sd;
        }
        let mut z = Array2::zeros((lookback, k));
        for i in 0..lookback {
            for j in 0..k {
                z[[i, j]] = (window[[i, j]] - means[j]) / stds[j];
            }
        }
        let cov = z.t().dot(&z) / (l - 1.0);
        let (lambda1, mut v) = crate::linalg::leading_eigenpair(&cov, 200)?;
        // Sign convention: the component score must move with the mean
        // implied level across the window.
        let scores = z.dot(&v);
        let row_means: Vec<f64> = (0..lookback)
            .map(|i| (0..k).map(|j| window[[i, j]]).sum::<f64>() / k as f64)
            .collect();
        let level_mean = row_means.iter().sum::<f64>() / l;
        let corr_num: f64 =
            scores.iter().zip(&row_means).map(|(s, m)| s * (m - level_mean)).sum();
        let mut scores = scores;
        if corr_num < 0.0 {
            v.mapv_inplace(|x| -x);
            scores.mapv_inplace(|x| -x);
        }
        // Composite index: per-column reconstruction from the component,
        // averaged across columns. Centered scores make its window mean equal
        // the mean of column means, which is positive.
        let b: f64 = (0..k).map(|j| v[j] * stds[j]).sum::<f64>() / k as f64;
        let a: f64 = means.iter().sum::<f64>() / k as f64;
        let composite_last = a + b * scores[lookback - 1];
        let rv_mean = trailing_mean(rv, t, lookback);
        dates.push(implied_panel.dates()[t]);
        vals.push(composite_last * rv_mean / a);
        let ratio = lambda1 / k as f64;
        ratio_sum += ratio;
        ratio_min = ratio_min.min(ratio);
    }
    let mean_ratio = ratio_sum / (n - lookback) as f64;
    let diag = PcaDiagnostics {
        mean_explained_ratio: mean_ratio,
        min_explained_ratio: ratio_min,
        low_signal: mean_ratio < 1.5 / k as f64,
    };
    Ok((ForecastSeries::from_raw(dates, vals)?, diag))
}

/// The model suite. Variants map one-to-one onto forecast panel columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MovingAverage,
    LevelShift,
    Garch,
    GjrGarch,
    Heavy,
    Har,
    AdjustedImplied,
    PcaImplied,
    Ewma,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::MovingAverage,
        ModelKind::LevelShift,
        ModelKind::Garch,
        ModelKind::GjrGarch,
        ModelKind::Heavy,
        ModelKind::Har,
        ModelKind::AdjustedImplied,
        ModelKind::PcaImplied,
        ModelKind::Ewma,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::MovingAverage => "moving_average",
            ModelKind::LevelShift => "level_shift",
            ModelKind::Garch => "garch",
            ModelKind::GjrGarch => "gjr_garch",
            ModelKind::Heavy => "heavy",
            ModelKind::Har => "har",
            ModelKind::AdjustedImplied => "adjusted_implied",
            ModelKind::PcaImplied => "pca_implied",
            ModelKind::Ewma => "ewma",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown forecast model '{name}'")))
    }

    /// Whether the model consumes the implied-volatility panel.
    pub fn needs_implied(&self) -> bool {
        matches!(self, ModelKind::AdjustedImplied | ModelKind::PcaImplied)
    }
}

/// Windows, decays, and thresholds for the model suite.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub models: Vec<ModelKind>,
    pub ma_window: usize,
    pub level_short: usize,
    pub level_long: usize,
    pub level_threshold: f64,
    pub ewma_lambda: f64,
    /// Smoothing window of the realized measure / realized vol proxy.
    pub rm_window: usize,
    pub implied_lookback: usize,
    /// Column of the implied panel used by the single-index model; first
    /// column when unset.
    pub implied_column: Option<String>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            ma_window: DEFAULT_VOL_WINDOW,
            level_short: 20,
            level_long: 60,
            level_threshold: 0.7,
            ewma_lambda: 0.94,
            rm_window: 5,
            implied_lookback: 60,
            implied_column: None,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("no forecast models selected".into()));
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return Err(Error::Config(format!("duplicate forecast model '{}'", m.name())));
            }
        }
        Ok(())
    }
}

/// Input bundle for [`forecast_all`]. The implied panel, when present, must
/// share the return series' dates.
#[derive(Debug, Clone, Copy)]
pub struct ForecastInputs<'a> {
    pub returns: &'a ReturnSeries,
    pub implied: Option<&'a SeriesPanel>,
}

/// Run every configured model and align the results into one panel, one
/// column per model.
///
/// `fit_end` bounds the data used for parameter estimation (GARCH, GJR,
/// HEAVY, HAR): fits see returns through `fit_end` only, while filters and
/// trailing windows run over the full span. Window models have no fitted
/// parameters and ignore it. Predictions stay strictly lagged either way.
pub fn forecast_all(
    config: &ForecastConfig,
    inputs: &ForecastInputs,
    fit_end: Option<NaiveDate>,
) -> Result<SeriesPanel> {
    config.validate()?;
    let returns = inputs.returns;
    let fit_slice = match fit_end {
        Some(date) => returns.up_to(date),
        None => returns.clone(),
    };
    let needs_implied = config.models.iter().any(|m| m.needs_implied());
    if needs_implied {
        match inputs.implied {
            None => {
                return Err(Error::Config(
                    "implied-volatility models selected but no implied panel supplied".into(),
                ))
            }
            Some(panel) if panel.dates() != returns.dates() => {
                return Err(Error::Misaligned("implied panel dates differ from returns".into()))
            }
            Some(_) => {}
        }
    }
    let rv = realized_vol_proxy(returns, config.rm_window)?;
    let rm = realized_measure(returns, config.rm_window)?;

    let mut panels = Vec::with_capacity(config.models.len());
    for model in &config.models {
        let series = match model {
            ModelKind::MovingAverage => moving_average_forecast(returns, config.ma_window)?,
            ModelKind::LevelShift => level_shift_forecast(
                returns,
                config.level_short,
                config.level_long,
                config.level_threshold,
            )?,
            ModelKind::Garch => {
                let params = fit_garch(&fit_slice, false)?;
                let var = garch_filter(&params, returns)?;
                ForecastSeries::from_raw(
                    returns.dates().to_vec(),
                    var.iter().map(|v| v.sqrt()).collect(),
                )?
            }
            ModelKind::GjrGarch => {
                let params = fit_garch(&fit_slice, true)?;
                let var = garch_filter(&params, returns)?;
                ForecastSeries::from_raw(
                    returns.dates().to_vec(),
                    var.iter().map(|v| v.sqrt()).collect(),
                )?
            }
            ModelKind::Heavy => {
                let rm_fit = match fit_end {
                    Some(date) => rm.up_to(date),
                    None => rm.clone(),
                };
                let params = fit_heavy(&fit_slice, &rm_fit)?;
                let seed = rm_fit.values().iter().sum::<f64>() / rm_fit.len().max(1) as f64;
                heavy_forecast(&params, &rm, Some(seed))?
            }
            ModelKind::Har => {
                let rv_fit = match fit_end {
                    Some(date) => rv.up_to(date),
                    None => rv.clone(),
                };
                let fit = fit_har(&rv_fit)?;
                har_forecast(&fit, &rv)?
            }
            ModelKind::AdjustedImplied => {
                let panel = inputs.implied.expect("checked above");
                let column = match &config.implied_column {
                    Some(name) => panel.column(name)?,
                    None => panel.column_at(0)?,
                };
                implied_adjusted_forecast(&column, &rv, config.implied_lookback)?
            }
            ModelKind::PcaImplied => {
                let panel = inputs.implied.expect("checked above");
                pca_implied_forecast(panel, &rv, config.implied_lookback)?.0
            }
            ModelKind::Ewma => ewma_forecast(returns, config.ewma_lambda)?,
        };
        panels.push(series.to_panel(model.name()));
    }
    align(&panels)
}
