//! GARCH(1,1) and GJR-GARCH(1,1) with Gaussian quasi-maximum-likelihood
//! estimation.
//!
//! Model: r_t = mu + eps_t, eps_t = sigma_t z_t, and
//!
//!   sigma^2_t = omega + (alpha + gamma * I_{t-1}) eps^2_{t-1} + beta sigma^2_{t-1}
//!
//! with I_{t-1} = 1 when r_{t-1} < mu. gamma = 0 recovers plain GARCH.
//! Estimation runs Nelder-Mead over an unconstrained reparameterization that
//! enforces the stationarity region, with a fixed multi-start schedule so fits
//! are deterministic given the data.

use crate::error::{Error, Result};
use crate::market_data::ReturnSeries;
use crate::optimize::{nelder_mead, NmOptions};

const LN_2PI: f64 = 1.837877066409345483560659472811;
/// Persistence is kept strictly inside the unit interval during fitting.
const PERSISTENCE_CAP: f64 = 0.9995;

/// Parameters of a (GJR-)GARCH(1,1) model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    /// Mean return per day.
    pub mu: f64,
    /// Variance intercept (return^2 units).
    pub omega: f64,
    /// ARCH coefficient.
    pub alpha: f64,
    /// GARCH (persistence) coefficient.
    pub beta: f64,
    /// Leverage coefficient; 0 for plain GARCH.
    pub gamma: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.gamma >= -self.alpha
            && self.persistence() < 1.0
            && self.mu.is_finite()
            && self.omega.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Params(format!("invalid GARCH parameters {self:?}")))
        }
    }

    /// alpha + gamma/2 + beta; < 1 on the stationary region.
    pub fn persistence(&self) -> f64 {
        self.alpha + 0.5 * self.gamma + self.beta
    }

    /// Unconditional variance omega / (1 - persistence).
    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }
}

/// Conditional variance series, index-aligned with `returns`.
///
/// sigma^2_0 is the unconditional variance; every later sigma^2_t depends
/// only on returns through t-1, so the output doubles as the strictly lagged
/// one-step-ahead variance prediction for each date.
pub fn garch_filter(params: &GarchParams, returns: &ReturnSeries) -> Result<Vec<f64>> {
    params.validate()?;
    if returns.is_empty() {
        return Err(Error::TooShort { need: 1, have: 0 });
    }
    let r = returns.values();
    let mut var = Vec::with_capacity(r.len());
    var.push(params.unconditional_variance());
    for t in 1..r.len() {
        var.push(one_step(params, r[t - 1], var[t - 1]));
    }
    Ok(var)
}

/// One recursion step: variance for the day after a return `r_prev` was
/// realized with conditional variance `var_prev`.
pub fn one_step(params: &GarchParams, r_prev: f64, var_prev: f64) -> f64 {
    let eps = r_prev - params.mu;
    let e2 = eps * eps;
    let arch = if eps < 0.0 { params.alpha + params.gamma } else { params.alpha };
    params.omega + arch * e2 + params.beta * var_prev
}

/// Gaussian log-likelihood of the returns under the filtered variances:
/// -1/2 sum_t [ log 2 pi + log sigma^2_t + eps^2_t / sigma^2_t ].
pub fn gaussian_loglik(params: &GarchParams, returns: &ReturnSeries) -> Result<f64> {
    let var = garch_filter(params, returns)?;
    let mut ll = 0.0;
    for (r, v) in returns.values().iter().zip(&var) {
        let eps = r - params.mu;
        ll -= 0.5 * (LN_2PI + v.ln() + eps * eps / v);
    }
    Ok(ll)
}

/// Unconstrained parameterization: theta = (mu scaled, log omega scale,
/// persistence logit, arch share logit, leverage tanh).
fn theta_to_params(theta: &[f64], mean_r: f64, std_r: f64, var_r: f64, leverage: bool) -> GarchParams {
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mu = mean_r + theta[0] * std_r;
    let omega = theta[1].exp() * var_r;
    let p = sigmoid(theta[2]) * PERSISTENCE_CAP;
    let share = sigmoid(theta[3]);
    let arch_eff = p * share; // alpha + gamma/2
    let beta = p * (1.0 - share);
    let (alpha, gamma) = if leverage {
        let g = 2.0 * arch_eff * 0.999 * theta[4].tanh();
        (arch_eff - 0.5 * g, g)
    } else {
        (arch_eff, 0.0)
    };
    GarchParams { mu, omega, alpha, beta, gamma }
}

/// Fit by maximizing [`gaussian_loglik`] with a deterministic 5-start
/// Nelder-Mead schedule. `leverage` enables the GJR gamma term.
pub fn fit_garch(returns: &ReturnSeries, leverage: bool) -> Result<GarchParams> {
    if returns.len() < 250 {
        return Err(Error::TooShort { need: 250, have: returns.len() });
    }
    let r = returns.values();
    let n = r.len() as f64;
    let mean_r = r.iter().sum::<f64>() / n;
    let var_r = r.iter().map(|x| (x - mean_r) * (x - mean_r)).sum::<f64>() / (n - 1.0);
    if var_r <= 0.0 {
        return Err(Error::Domain("constant return series".into()));
    }
    let std_r = var_r.sqrt();

    let logit = |p: f64| (p / (1.0 - p)).ln();
    // (persistence, arch share) starting grid; omega starts at variance
    // targeting omega = var * (1 - p).
    let starts: [(f64, f64); 5] =
        [(0.90, 0.10), (0.97, 0.08), (0.50, 0.20), (0.97, 0.30), (0.80, 0.05)];

    let dim = if leverage { 5 } else { 4 };
    let objective = |theta: &[f64]| {
        let params = theta_to_params(theta, mean_r, std_r, var_r, leverage);
        match gaussian_loglik(&params, returns) {
            Ok(ll) if ll.is_finite() => -ll / n,
            _ => 1e12,
        }
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for (p, q) in starts {
        let mut theta0 = vec![0.0, (1.0 - p).ln(), logit(p), logit(q)];
        if leverage {
            theta0.push(0.0);
        }
        theta0.truncate(dim);
        let (theta, fval, _) = nelder_mead(
            &objective,
            &theta0,
            NmOptions { max_iters: 800, f_tol: 1e-11, x_tol: 1e-8, step: 0.3 },
        );
        if best.as_ref().map_or(true, |(_, f)| fval < *f) {
            best = Some((theta, fval));
        }
    }
    let (theta, fval) = best.ok_or_else(|| Error::Optimizer("no GARCH start converged".into()))?;
    if !fval.is_finite() || fval >= 1e12 {
        return Err(Error::Optimizer("GARCH likelihood did not evaluate".into()));
    }
    let params = theta_to_params(&theta, mean_r, std_r, var_r, leverage);
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{simulate_market, weekday_calendar, SyntheticMarketConfig};
    use chrono::NaiveDate;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 2).unwrap()
    }

    fn series(values: Vec<f64>) -> ReturnSeries {
        ReturnSeries::new(weekday_calendar(day0(), values.len()), values).unwrap()
    }

    fn sim_returns(n: usize, seed: u64, alpha: f64, beta: f64, omega: f64) -> ReturnSeries {
        let mut cfg = SyntheticMarketConfig::single_regime_default(n, seed);
        cfg.regimes[0].alpha = alpha;
        cfg.regimes[0].beta = beta;
        cfg.regimes[0].omega = omega;
        simulate_market(&cfg).unwrap().returns().clone()
    }

    #[test]
    fn filter_hand_recursion() {
        // mu=0, omega=0.1, alpha=0.2, beta=0.7: sigma2_0 = 0.1/(1-0.9) = 1.0,
        // sigma2_1 = 0.1 + 0.2*0.25 + 0.7*1.0 = 0.85 after a 0.5 return.
        let p = GarchParams { mu: 0.0, omega: 0.1, alpha: 0.2, beta: 0.7, gamma: 0.0 };
        let var = garch_filter(&p, &series(vec![0.5, 0.0])).unwrap();
        assert!((var[0] - 1.0).abs() < 1e-15);
        assert!((var[1] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn filter_degenerate_is_constant_omega() {
        // alpha = beta = gamma = 0 -> sigma2_t = omega for all t >= 1.
        let p = GarchParams { mu: 0.001, omega: 4e-5, alpha: 0.0, beta: 0.0, gamma: 0.0 };
        let var = garch_filter(&p, &series(vec![0.01, -0.02, 0.005, 0.0])).unwrap();
        for v in &var {
            assert!((v - 4e-5).abs() < 1e-20);
        }
    }

    #[test]
    fn gjr_negative_shock_raises_variance_more() {
        let p = GarchParams { mu: 0.0, omega: 1e-6, alpha: 0.05, beta: 0.85, gamma: 0.1 };
        let up = garch_filter(&p, &series(vec![0.02, 0.0])).unwrap();
        let down = garch_filter(&p, &series(vec![-0.02, 0.0])).unwrap();
        // Hand recursion: difference is exactly gamma * eps^2.
        assert!((down[1] - up[1] - 0.1 * 0.02 * 0.02).abs() < 1e-15);
        assert!(down[1] > up[1]);
    }

    #[test]
    fn gamma_zero_matches_plain_recursion_bitwise() {
        let p = GarchParams { mu: 0.0002, omega: 2e-6, alpha: 0.1, beta: 0.85, gamma: 0.0 };
        let rets = sim_returns(300, 5, 0.1, 0.85, 2e-6);
        let var = garch_filter(&p, &rets).unwrap();
        // Independent plain-GARCH recursion without the indicator term.
        let r = rets.values();
        let mut expect = p.unconditional_variance();
        assert_eq!(var[0], expect);
        for t in 1..r.len() {
            let eps = r[t - 1] - p.mu;
            let e2 = eps * eps;
            expect = p.omega + p.alpha * e2 + p.beta * expect;
            assert_eq!(var[t], expect);
        }
    }

    #[test]
    fn loglik_single_mean_return() {
        // One return equal to mu with sigma2_0 = 1: LL = -0.5 * log(2 pi).
        let p = GarchParams { mu: 0.0, omega: 0.1, alpha: 0.2, beta: 0.7, gamma: 0.0 };
        let ll = gaussian_loglik(&p, &series(vec![0.0])).unwrap();
        assert!((ll + 0.5 * LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn loglik_scaling_adds_jacobian_term() {
        // r -> c r with mu -> c mu, omega -> c^2 omega keeps standardized
        // residuals; LL changes by -T log c.
        let rets = sim_returns(400, 8, 0.08, 0.9, 1e-6);
        let c = 3.0;
        let scaled =
            ReturnSeries::new(rets.dates().to_vec(), rets.values().iter().map(|r| c * r).collect())
                .unwrap();
        let p = GarchParams { mu: 0.0001, omega: 1.2e-6, alpha: 0.1, beta: 0.85, gamma: 0.0 };
        let p_scaled = GarchParams { mu: c * p.mu, omega: c * c * p.omega, ..p };
        let ll = gaussian_loglik(&p, &rets).unwrap();
        let ll_scaled = gaussian_loglik(&p_scaled, &scaled).unwrap();
        let t = rets.len() as f64;
        assert!((ll_scaled - (ll - t * c.ln())).abs() < 1e-8 * t);
    }

    #[test]
    fn fit_recovers_simulated_parameters() {
        let rets = sim_returns(20_000, 17, 0.08, 0.90, 1e-6);
        let fit = fit_garch(&rets, false).unwrap();
        assert!((fit.alpha - 0.08).abs() < 0.03, "alpha {}", fit.alpha);
        assert!((fit.beta - 0.90).abs() < 0.03, "beta {}", fit.beta);
        assert!(fit.omega > 0.5e-6 && fit.omega < 1.5e-6, "omega {}", fit.omega);
        fit.validate().unwrap();
    }

    #[test]
    fn fit_iid_data_has_small_alpha() {
        // alpha = beta = 0 in the generator -> i.i.d. Gaussian returns.
        let rets = sim_returns(8_000, 23, 0.0, 0.0, 1e-4);
        let fit = fit_garch(&rets, false).unwrap();
        assert!(fit.alpha <= 0.05, "alpha {}", fit.alpha);
    }

    #[test]
    fn fit_leverage_on_symmetric_data_is_small() {
        let rets = sim_returns(20_000, 31, 0.08, 0.90, 1e-6);
        let fit = fit_garch(&rets, true).unwrap();
        assert!(fit.gamma.abs() < 0.05, "gamma {}", fit.gamma);
        fit.validate().unwrap();
    }

    #[test]
    fn fitted_loglik_beats_fixed_parameter_grid() {
        // Local-optimality smoke test on a fixed 100-point (persistence,
        // share) grid, plus an omega sweep away from the MLE.
        let rets = sim_returns(4_000, 41, 0.08, 0.9, 1e-6);
        let fit = fit_garch(&rets, false).unwrap();
        let ll_fit = gaussian_loglik(&fit, &rets).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let p = 0.05 + 0.094 * i as f64;
                let q = 0.05 + 0.09 * j as f64;
                let cand = GarchParams {
                    mu: fit.mu,
                    omega: fit.omega,
                    alpha: p * q,
                    beta: p * (1.0 - q),
                    gamma: 0.0,
                };
                assert!(gaussian_loglik(&cand, &rets).unwrap() <= ll_fit + 1e-9);
            }
        }
        for mult in [0.05, 0.2, 5.0, 20.0] {
            let cand = GarchParams { omega: fit.omega * mult, ..fit };
            assert!(gaussian_loglik(&cand, &rets).unwrap() < ll_fit);
        }
    }

    #[test]
    fn fit_rejects_short_series() {
        let rets = sim_returns(200, 1, 0.05, 0.9, 1e-6);
        assert!(matches!(fit_garch(&rets, false), Err(Error::TooShort { .. })));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = GarchParams { mu: 0.0, omega: 1e-6, alpha: 0.6, beta: 0.5, gamma: 0.0 };
        assert!(p.validate().is_err());
        assert!(garch_filter(&p, &series(vec![0.0])).is_err());
    }
}
