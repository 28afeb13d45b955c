//! Volatility targeting: convert a volatility forecast into daily leverage on
//! the risky asset, producing one strategy return/price series per forecast
//! model.
//!
//! The leverage applied on day t is the ratio of the daily volatility target
//! to the volatility predicted for day t (a prediction made at t-1), capped to
//! keep floor-level forecasts from requesting unbounded exposure.

use crate::error::{Error, Result};
use crate::market_data::{DatedSeries, ReturnSeries, SeriesPanel};
use crate::vol_forecast::{ForecastSeries, VOL_FLOOR};
use chrono::NaiveDate;
use ndarray::Array2;

/// Volatility target and leverage limits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TargetConfig {
    /// Annualized volatility target, e.g. 0.1 for 10%/year.
    pub sigma_target_annual: f64,
    /// Trading days per year used for annualization.
    pub annualization_days: f64,
    /// Maximum leverage magnitude.
    pub leverage_cap: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { sigma_target_annual: 0.1, annualization_days: 252.0, leverage_cap: 10.0 }
    }
}

impl TargetConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_target_annual > 0.0
            && self.annualization_days > 0.0
            && self.leverage_cap > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid target config {self:?}")))
        }
    }

    /// Daily volatility target: annual target / sqrt(annualization days).
    pub fn sigma_target_daily(&self) -> f64 {
        self.sigma_target_annual / self.annualization_days.sqrt()
    }
}

/// Leverage for one day: min(target vol / predicted vol, cap).
pub fn leverage(cfg: &TargetConfig, sigma_pred_daily: f64) -> Result<f64> {
    cfg.validate()?;
    if sigma_pred_daily < VOL_FLOOR {
        return Err(Error::Domain(format!(
            "predicted volatility {sigma_pred_daily} below floor {VOL_FLOOR}"
        )));
    }
    Ok((cfg.sigma_target_daily() / sigma_pred_daily).min(cfg.leverage_cap))
}

/// Per-day leverage series for a forecast. The value dated t is the leverage
/// applied to day t's return; it derives from the forecast dated t, which was
/// formed at t-1, so the decision lag is inherited from [`ForecastSeries`].
pub fn leverage_series(forecast: &ForecastSeries, cfg: &TargetConfig) -> Result<DatedSeries> {
    let mut k = Vec::with_capacity(forecast.len());
    for v in forecast.values() {
        k.push(leverage(cfg, *v)?);
    }
    DatedSeries::new(forecast.dates().to_vec(), k)
}

/// Apply a leverage series to the risky asset's returns over their common
/// dates: strategy return at t = k_t * r_t.
///
/// The leverage value dated t must have been decided from information through
/// t-1 (true for anything built by [`leverage_series`]); under that
/// convention this is the usual "yesterday's leverage times today's return".
pub fn strategy_returns(k: &DatedSeries, bond: &ReturnSeries) -> Result<ReturnSeries> {
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, date) in k.dates().iter().enumerate() {
        if let Some(j) = bond.index_of(*date) {
            dates.push(*date);
            values.push(k.values()[i] * bond.values()[j]);
        }
    }
    if dates.is_empty() {
        return Err(Error::Misaligned("leverage and asset returns share no dates".into()));
    }
    ReturnSeries::new(dates, values)
}

/// Dated return and compounded price paths for a set of strategies.
///
/// A base row is prepended at the trade date preceding the first strategy
/// return: zero return, price 1. Every price is then exactly the cumulative
/// product of (1 + return) down its column, and the price on the first date
/// is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPanel {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    returns: Array2<f64>,
    prices: Array2<f64>,
}

impl StrategyPanel {
    /// Build from per-strategy returns starting at `dates[0]`, prepending the
    /// base row at `base_date`.
    pub fn from_returns(
        base_date: NaiveDate,
        dates: Vec<NaiveDate>,
        names: Vec<String>,
        returns: Array2<f64>,
    ) -> Result<Self> {
        if dates.is_empty() || names.is_empty() {
            return Err(Error::Shape("empty strategy panel".into()));
        }
        if returns.nrows() != dates.len() || returns.ncols() != names.len() {
            return Err(Error::Shape(format!(
                "strategy returns {}x{} vs {} dates, {} names",
                returns.nrows(),
                returns.ncols(),
                dates.len(),
                names.len()
            )));
        }
        if base_date >= dates[0] {
            return Err(Error::Misaligned(format!(
                "base date {base_date} not before first return date {}",
                dates[0]
            )));
        }
        if returns.iter().any(|r| !r.is_finite() || *r <= -1.0) {
            return Err(Error::Domain("strategy return at or below -100%".into()));
        }
        let n = names.len();
        let t = dates.len() + 1;
        let mut all_dates = Vec::with_capacity(t);
        all_dates.push(base_date);
        all_dates.extend_from_slice(&dates);
        if all_dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Misaligned("strategy dates not strictly increasing".into()));
        }
        let mut full_returns = Array2::zeros((t, n));
        let mut prices = Array2::zeros((t, n));
        for j in 0..n {
            prices[[0, j]] = 1.0;
            for i in 1..t {
                full_returns[[i, j]] = returns[[i - 1, j]];
                prices[[i, j]] = prices[[i - 1, j]] * (1.0 + full_returns[[i, j]]);
            }
        }
        Ok(Self { dates: all_dates, names, returns: full_returns, prices })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Returns matrix including the leading zero base row.
    pub fn returns(&self) -> &Array2<f64> {
        &self.returns
    }

    /// Compounded prices; row 0 is all ones.
    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn n_strategies(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Sub-panel over rows `[from, to]` (inclusive); row `from` becomes the
    /// new base row with zero return and price 1.
    pub fn slice_rows(&self, from: usize, to: usize) -> Result<StrategyPanel> {
        if from >= to || to >= self.len() {
            return Err(Error::Shape(format!(
                "slice [{from}, {to}] of {} strategy rows",
                self.len()
            )));
        }
        let dates = self.dates[from + 1..=to].to_vec();
        let returns = self.returns.slice(ndarray::s![from + 1..=to, ..]).to_owned();
        StrategyPanel::from_returns(self.dates[from], dates, self.names.clone(), returns)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn returns_panel(&self) -> SeriesPanel {
        SeriesPanel::new(self.dates.clone(), self.names.clone(), self.returns.clone())
            .expect("validated at construction")
    }

    pub fn prices_panel(&self) -> SeriesPanel {
        SeriesPanel::new(self.dates.clone(), self.names.clone(), self.prices.clone())
            .expect("validated at construction")
    }
}

/// Volatility-target every forecast column against the same risky asset and
/// assemble the resulting strategies.
///
/// Columns of `forecast_panel` are daily-volatility predictions (one model
/// each); rows must be a subset of the asset's trading dates, starting
/// strictly after the asset's first date so a base row can be anchored.
pub fn build_strategy_panel(
    forecast_panel: &SeriesPanel,
    bond: &ReturnSeries,
    cfg: &TargetConfig,
) -> Result<StrategyPanel> {
    cfg.validate()?;
    if forecast_panel.n_rows() == 0 || forecast_panel.n_cols() == 0 {
        return Err(Error::Shape("empty forecast panel".into()));
    }
    let mut columns = Vec::with_capacity(forecast_panel.n_cols());
    for name in forecast_panel.names() {
        let series = forecast_panel.column(name)?;
        let forecast = ForecastSeries::from_raw(series.dates().to_vec(), series.values().to_vec())?;
        let k = leverage_series(&forecast, cfg)?;
        columns.push(strategy_returns(&k, bond)?);
    }
    let dates = columns[0].dates().to_vec();
    for c in &columns[1..] {
        if c.dates() != dates {
            return Err(Error::Misaligned("strategy columns disagree on dates".into()));
        }
    }
    let first = dates[0];
    let base_idx = bond
        .index_of(first)
        .ok_or_else(|| Error::Misaligned(format!("{first} not a trading date of the asset")))?;
    if base_idx == 0 {
        return Err(Error::Misaligned(
            "no trading date precedes the first strategy return to anchor the base row".into(),
        ));
    }
    let base_date = bond.dates()[base_idx - 1];
    let mut returns = Array2::zeros((dates.len(), columns.len()));
    for (j, c) in columns.iter().enumerate() {
        for (i, v) in c.values().iter().enumerate() {
            returns[[i, j]] = *v;
        }
    }
    StrategyPanel::from_returns(
        base_date,
        dates,
        forecast_panel.names().to_vec(),
        returns,
    )
}
