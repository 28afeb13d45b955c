//! HEAVY-style volatility model driven by a realized measure RM:
//!
//!   sigma^2_t = omega + alpha_rm RM_{t-1} + beta sigma^2_{t-1}
//!
//! with parameters estimated by Gaussian quasi-maximum-likelihood on the
//! return series (same likelihood form as the GARCH estimator but with this
//! recursion). On daily data the realized measure is a short moving average
//! of squared demeaned returns, see
//! [`realized_measure`](crate::vol_forecast::realized_measure).

use crate::error::{Error, Result};
use crate::market_data::{DatedSeries, ReturnSeries};
use crate::optimize::{nelder_mead, NmOptions};
use crate::vol_forecast::ForecastSeries;

const LN_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyParams {
    /// Variance intercept.
    pub omega: f64,
    /// Loading on the lagged realized measure.
    pub alpha_rm: f64,
    /// Variance persistence, < 1.
    pub beta: f64,
}

impl HeavyParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega > 0.0
            && self.alpha_rm >= 0.0
            && self.beta >= 0.0
            && self.beta < 1.0
            && self.omega.is_finite()
            && self.alpha_rm.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Params(format!("invalid HEAVY parameters {self:?}")))
        }
    }
}

/// Steady-state variance when the realized measure sits at `rm_mean`.
pub fn heavy_unconditional_variance(params: &HeavyParams, rm_mean: f64) -> f64 {
    (params.omega + params.alpha_rm * rm_mean) / (1.0 - params.beta)
}

/// Conditional variance series, index-aligned with `rm`; entry t depends on
/// the realized measure through t-1 only. `sigma2_0` seeds the recursion.
pub fn heavy_filter(params: &HeavyParams, rm: &[f64], sigma2_0: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if rm.is_empty() {
        return Err(Error::TooShort { need: 1, have: 0 });
    }
    if sigma2_0 <= 0.0 || rm.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Domain("realized measure and seed variance must be nonnegative".into()));
    }
    let mut var = Vec::with_capacity(rm.len());
    var.push(sigma2_0);
    for t in 1..rm.len() {
        var.push(params.omega + params.alpha_rm * rm[t - 1] + params.beta * var[t - 1]);
    }
    Ok(var)
}

fn loglik(params: &HeavyParams, eps: &[f64], rm: &[f64]) -> Result<f64> {
    let rm_mean = rm.iter().sum::<f64>() / rm.len() as f64;
    let var = heavy_filter(params, rm, heavy_unconditional_variance(params, rm_mean))?;
    let mut ll = 0.0;
    for (e, v) in eps.iter().zip(&var) {
        ll -= 0.5 * (LN_2PI + v.ln() + e * e / v);
    }
    Ok(ll)
}

/// Fit by quasi-maximum-likelihood on demeaned returns with a deterministic
/// multi-start Nelder-Mead schedule. Returns and realized measure must share
/// the same dates.
pub fn fit_heavy(returns: &ReturnSeries, rm: &DatedSeries) -> Result<HeavyParams> {
    if returns.dates() != rm.dates() {
        return Err(Error::Misaligned("returns and realized measure dates differ".into()));
    }
    if returns.len() < 250 {
        return Err(Error::TooShort { need: 250, have: returns.len() });
    }
    let n = returns.len() as f64;
    let mean_r = returns.values().iter().sum::<f64>() / n;
    let eps: Vec<f64> = returns.values().iter().map(|r| r - mean_r).collect();
    let var_r = eps.iter().map(|e| e * e).sum::<f64>() / (n - 1.0);
    let rm_mean = rm.values().iter().sum::<f64>() / n;
    if var_r <= 0.0 || rm_mean <= 0.0 {
        return Err(Error::Domain("degenerate returns or realized measure".into()));
    }

    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    // theta = (log omega scale, log alpha_rm, beta logit).
    let to_params = |theta: &[f64]| HeavyParams {
        omega: theta[0].exp() * var_r,
        alpha_rm: theta[1].exp(),
        beta: sigmoid(theta[2]) * 0.9995,
    };
    let objective = |theta: &[f64]| {
        let params = to_params(theta);
        match loglik(&params, &eps, rm.values()) {
            Ok(ll) if ll.is_finite() => -ll / n,
            _ => 1e12,
        }
    };

    let logit = |p: f64| (p / (1.0 - p)).ln();
    let starts = [(0.10_f64, 0.3_f64, 0.6_f64), (0.05, 0.4, 0.55), (0.30, 0.1, 0.85)];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (w, a, b) in starts {
        let theta0 = vec![w.ln(), a.ln(), logit(b)];
        let (theta, fval, _) = nelder_mead(
            &objective,
            &theta0,
            NmOptions { max_iters: 600, f_tol: 1e-11, x_tol: 1e-8, step: 0.3 },
        );
        if best.as_ref().map_or(true, |(_, f)| fval < *f) {
            best = Some((theta, fval));
        }
    }
    let (theta, fval) = best.ok_or_else(|| Error::Optimizer("no HEAVY start converged".into()))?;
    if !fval.is_finite() || fval >= 1e12 {
        return Err(Error::Optimizer("HEAVY likelihood did not evaluate".into()));
    }
    let params = to_params(&theta);
    params.validate()?;
    Ok(params)
}

/// Strictly lagged volatility predictions from the fitted recursion.
///
/// The recursion is seeded at the steady state implied by `seed_rm_mean`;
/// callers applying params fitted on a leading slice should pass that slice's
/// mean realized measure so the seed never looks past the fit span. With
/// `None` the full-sample mean is used (in-sample filtering).
pub fn heavy_forecast(
    params: &HeavyParams,
    rm: &DatedSeries,
    seed_rm_mean: Option<f64>,
) -> Result<ForecastSeries> {
    let rm_mean = match seed_rm_mean {
        Some(m) => m,
        None => rm.values().iter().sum::<f64>() / rm.len().max(1) as f64,
    };
    let var = heavy_filter(params, rm.values(), heavy_unconditional_variance(params, rm_mean))?;
    ForecastSeries::from_raw(rm.dates().to_vec(), var.iter().map(|v| v.sqrt()).collect())
}
