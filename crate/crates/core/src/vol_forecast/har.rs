//! Heterogeneous autoregression (HAR) of realized volatility on its daily,
//! weekly, and monthly trailing components:
//!
//!   sigma_t = c + b_d sigma_{t-1} + b_w mean(sigma_{t-5..t-1})
//!               + b_m mean(sigma_{t-22..t-1}) + e_t
//!
//! fit by ordinary least squares.

use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::market_data::DatedSeries;
use crate::vol_forecast::ForecastSeries;
use ndarray::{Array1, Array2};

/// Daily lag depth of the monthly component; rows before this index have
/// incomplete regressors and are dropped.
pub const HAR_LAGS: usize = 22;
const WEEKLY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarParams {
    pub intercept: f64,
    pub beta_daily: f64,
    pub beta_weekly: f64,
    pub beta_monthly: f64,
}

/// Fitted HAR model with classical OLS standard errors, ordered as
/// (intercept, daily, weekly, monthly).
#[derive(Debug, Clone, PartialEq)]
pub struct HarFit {
    pub params: HarParams,
    pub std_errors: [f64; 4],
    pub n_obs: usize,
}

fn regressors(vol: &[f64], t: usize) -> [f64; 3] {
    let daily = vol[t - 1];
    let weekly = vol[t - WEEKLY..t].iter().sum::<f64>() / WEEKLY as f64;
    let monthly = vol[t - HAR_LAGS..t].iter().sum::<f64>() / HAR_LAGS as f64;
    [daily, weekly, monthly]
}

/// Fit the HAR regression on a realized volatility series.
///
/// A constant series makes every regressor collinear with the intercept; that
/// case degenerates to an intercept-only regression (which is still the least
/// squares solution and reproduces the constant exactly). Any other exact
/// collinearity surfaces as a singular design matrix error.
pub fn fit_har(realized_vol: &DatedSeries) -> Result<HarFit> {
    let vol = realized_vol.values();
    if vol.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Domain("realized volatility must be positive and finite".into()));
    }
    let n = vol.len().saturating_sub(HAR_LAGS);
    if n < 100 {
        return Err(Error::TooShort { need: HAR_LAGS + 100, have: vol.len() });
    }

    let constant = vol.iter().all(|v| *v == vol[0]);
    if constant {
        let params = HarParams {
            intercept: vol[0],
            beta_daily: 0.0,
            beta_weekly: 0.0,
            beta_monthly: 0.0,
        };
        return Ok(HarFit { params, std_errors: [0.0; 4], n_obs: n });
    }

    let mut x = Array2::zeros((n, 4));
    let mut y = Array1::zeros(n);
    for (row, t) in (HAR_LAGS..vol.len()).enumerate() {
        let [d, w, m] = regressors(vol, t);
        x[[row, 0]] = 1.0;
        x[[row, 1]] = d;
        x[[row, 2]] = w;
        x[[row, 3]] = m;
        y[row] = vol[t];
    }
    let (coef, se) = ols(&x, &y)?;
    Ok(HarFit {
        params: HarParams {
            intercept: coef[0],
            beta_daily: coef[1],
            beta_weekly: coef[2],
            beta_monthly: coef[3],
        },
        std_errors: [se[0], se[1], se[2], se[3]],
        n_obs: n,
    })
}

/// One-step-ahead fitted values: the prediction for each date uses realized
/// volatility through the previous date only. Output starts after the first
/// [`HAR_LAGS`] dates.
pub fn har_forecast(fit: &HarFit, realized_vol: &DatedSeries) -> Result<ForecastSeries> {
    let vol = realized_vol.values();
    if vol.len() <= HAR_LAGS {
        return Err(Error::TooShort { need: HAR_LAGS + 1, have: vol.len() });
    }
    let p = &fit.params;
    let mut dates = Vec::with_capacity(vol.len() - HAR_LAGS);
    let mut pred = Vec::with_capacity(vol.len() - HAR_LAGS);
    for t in HAR_LAGS..vol.len() {
        let [d, w, m] = regressors(vol, t);
        dates.push(realized_vol.dates()[t]);
        pred.push(p.intercept + p.beta_daily * d + p.beta_weekly * w + p.beta_monthly * m);
    }
    ForecastSeries::from_raw(dates, pred)
}
