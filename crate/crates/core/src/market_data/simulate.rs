//! Synthetic regime-switching market generator.
//!
//! A Markov chain selects a regime each day; the active regime's GARCH(1,1)
//! parameters and drift drive the return for that day, with the conditional
//! variance carried across regime switches. The context panel holds a noisy
//! regime indicator plus nuisance noise columns, and synthetic implied-vol
//! indices track the next day's conditional volatility with lognormal
//! observation noise.

use chrono::NaiveDate;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{weekday_calendar, DatedSeries, ReturnSeries, SeriesPanel};
use crate::error::{Error, Result};

/// One regime of the generator: switching persistence, daily drift, and
/// GARCH(1,1) variance dynamics.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RegimeSpec {
    /// Probability of staying in this regime on the next day, in (0,1).
    pub persistence: f64,
    /// Deterministic return drift per day.
    pub drift: f64,
    /// Variance intercept (return^2 units), > 0.
    pub omega: f64,
    /// ARCH coefficient, >= 0.
    pub alpha: f64,
    /// GARCH coefficient, >= 0; alpha + beta < 1.
    pub beta: f64,
}

impl RegimeSpec {
    fn validate(&self) -> Result<()> {
        if !(self.persistence > 0.0 && self.persistence < 1.0) {
            return Err(Error::Config(format!(
                "persistence {} outside (0,1)",
                self.persistence
            )));
        }
        if self.omega <= 0.0 || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("omega must be > 0, alpha/beta >= 0".into()));
        }
        if self.alpha + self.beta >= 1.0 {
            return Err(Error::Config(format!(
                "non-stationary regime: alpha + beta = {}",
                self.alpha + self.beta
            )));
        }
        if !self.drift.is_finite() {
            return Err(Error::Config("drift must be finite".into()));
        }
        Ok(())
    }

    /// Unconditional variance omega / (1 - alpha - beta).
    pub fn stationary_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }
}

/// Configuration of the synthetic market.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticMarketConfig {
    pub n_days: usize,
    pub regimes: Vec<RegimeSpec>,
    /// Std of the Gaussian observation noise on the regime-revealing signal.
    pub context_noise: f64,
    /// Number of pure-noise context columns.
    pub n_nuisance: usize,
    /// Number of synthetic implied-volatility index columns.
    pub n_implied: usize,
    /// Lognormal noise scale on the implied indices.
    pub implied_noise: f64,
    /// First calendar day; the calendar is Mon-Fri from here.
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl SyntheticMarketConfig {
    /// A single calm GARCH regime, handy for tests.
    pub fn single_regime_default(n_days: usize, seed: u64) -> Self {
        Self {
            n_days,
            regimes: vec![RegimeSpec {
                persistence: 0.99,
                drift: 0.0,
                omega: 1e-6,
                alpha: 0.08,
                beta: 0.90,
            }],
            context_noise: 0.1,
            n_nuisance: 2,
            n_implied: 2,
            implied_noise: 0.05,
            start_date: NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_days == 0 {
            return Err(Error::Config("n_days must be positive".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("at least one regime required".into()));
        }
        for r in &self.regimes {
            r.validate()?;
        }
        if self.context_noise < 0.0 || self.implied_noise < 0.0 {
            return Err(Error::Config("noise scales must be >= 0".into()));
        }
        Ok(())
    }
}

/// Output of [`simulate_market`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMarket {
    returns: ReturnSeries,
    context: SeriesPanel,
    implied: SeriesPanel,
    regimes: Vec<usize>,
    true_vol: DatedSeries,
}

impl SimulatedMarket {
    pub fn returns(&self) -> &ReturnSeries {
        &self.returns
    }

    /// Context signals: `regime_signal` plus `noise_*` nuisance columns.
    pub fn context(&self) -> &SeriesPanel {
        &self.context
    }

    /// Synthetic implied-vol indices (`implied_1`, ...).
    pub fn implied(&self) -> &SeriesPanel {
        &self.implied
    }

    /// Regime index active on each day.
    pub fn regimes(&self) -> &[usize] {
        &self.regimes
    }

    /// Conditional daily volatility of the return dated t; determined by
    /// information through t-1, so it doubles as the oracle one-step forecast.
    pub fn true_vol(&self) -> &DatedSeries {
        &self.true_vol
    }
}

/// Generate a regime-switching GARCH market. Bit-reproducible for a fixed
/// seed.
pub fn simulate_market(cfg: &SyntheticMarketConfig) -> Result<SimulatedMarket> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_days;
    let k = cfg.regimes.len();

    // Regime path.
    let mut regimes = Vec::with_capacity(n);
    let mut cur = 0usize;
    regimes.push(cur);
    for _ in 1..n {
        let stay: f64 = rng.random();
        if stay >= cfg.regimes[cur].persistence && k > 1 {
            let mut next = rng.random_range(0..k - 1);
            if next >= cur {
                next += 1;
            }
            cur = next;
        }
        regimes.push(cur);
    }

    // Returns with conditional variance carried across switches. sigma2 at t
    // is fixed by information through t-1.
    let mut sigma2 = cfg.regimes[regimes[0]].stationary_variance();
    let mut returns = Vec::with_capacity(n);
    let mut true_vol = Vec::with_capacity(n);
    let mut next_vol = Vec::with_capacity(n); // sigma_{t+1}, for implied indices
    for t in 0..n {
        let spec = &cfg.regimes[regimes[t]];
        true_vol.push(sigma2.sqrt());
        let z: f64 = rng.sample(StandardNormal);
        let eps = sigma2.sqrt() * z;
        let r = spec.drift + eps;
        returns.push(r.max(-0.999_999)); // return domain guard; astronomically unlikely
        let next_spec = if t + 1 < n { &cfg.regimes[regimes[t + 1]] } else { spec };
        sigma2 = next_spec.omega + next_spec.alpha * eps * eps + next_spec.beta * sigma2;
        next_vol.push(sigma2.sqrt());
    }

    let dates = weekday_calendar(cfg.start_date, n);

    // Context: noisy regime indicator first, then nuisance columns.
    let n_ctx = 1 + cfg.n_nuisance;
    let mut ctx = Array2::zeros((n, n_ctx));
    for t in 0..n {
        let noise: f64 = rng.sample(StandardNormal);
        ctx[[t, 0]] = regimes[t] as f64 + cfg.context_noise * noise;
    }
    for j in 0..cfg.n_nuisance {
        for t in 0..n {
            ctx[[t, j + 1]] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut ctx_names = vec!["regime_signal".to_string()];
    for j in 0..cfg.n_nuisance {
        ctx_names.push(format!("noise_{}", j + 1));
    }
    let context = SeriesPanel::new(dates.clone(), ctx_names, ctx)?;

    // Implied indices: scale_j * sigma_{t+1} * mean-one lognormal noise.
    let mut implied = Array2::zeros((n, cfg.n_implied));
    for j in 0..cfg.n_implied {
        let scale = 1.0 + 0.1 * j as f64;
        for t in 0..n {
            let zeta: f64 = rng.sample(StandardNormal);
            let noise = (cfg.implied_noise * zeta - 0.5 * cfg.implied_noise.powi(2)).exp();
            implied[[t, j]] = scale * next_vol[t] * noise;
        }
    }
    let implied_names: Vec<String> =
        (1..=cfg.n_implied).map(|j| format!("implied_{j}")).collect();
    let implied = SeriesPanel::new(dates.clone(), implied_names, implied)?;

    Ok(SimulatedMarket {
        returns: ReturnSeries::new(dates.clone(), returns)?,
        context,
        implied,
        regimes,
        true_vol: DatedSeries::new(dates, true_vol)?,
    })
}
