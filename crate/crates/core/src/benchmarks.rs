//! Reference allocators the learned policy is compared against: long-only
//! minimum-variance Markowitz at a target return, the equal-weight average,
//! and follow-the-winner.

use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::rl_env::ActionVector;
use crate::vol_target::StrategyPanel;
use ndarray::{Array1, Array2};

/// Ridge added to the covariance diagonal; the candidate strategies are
/// near-collinear, so mild regularization is the expected regime.
pub const COV_RIDGE: f64 = 1e-10;

/// Largest asset count the exact support enumeration accepts.
pub const MAX_ENUM_ASSETS: usize = 12;

/// Inputs to the long-only minimum-variance problem
/// `min w' S w  s.t.  mu' w >= r_min, sum w = 1, w >= 0`.
#[derive(Debug, Clone)]
pub struct MarkowitzInput {
    mu: Vec<f64>,
    sigma: Array2<f64>,
    r_min: f64,
    estimation_window: usize,
}

impl MarkowitzInput {
    /// Validate, symmetrize the covariance, and apply the diagonal ridge.
    pub fn new(mu: Vec<f64>, sigma: Array2<f64>, r_min: f64, estimation_window: usize) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::Shape("empty expected-return vector".into()));
        }
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::Shape(format!(
                "covariance {}x{} vs {n} assets",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) || sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("non-finite Markowitz input".into()));
        }
        if !r_min.is_finite() {
            return Err(Error::Domain("non-finite return target".into()));
        }
        let mut sym = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                sym[[i, j]] = 0.5 * (sigma[[i, j]] + sigma[[j, i]]);
            }
            sym[[i, i]] += COV_RIDGE;
        }
        Ok(Self { mu, sigma: sym, r_min, estimation_window })
    }

    /// Sample moments from a trailing window of per-strategy returns
    /// (rows = days).
    pub fn from_history(history: &Array2<f64>, r_min: f64) -> Result<Self> {
        let (t, n) = history.dim();
        if t < 2 {
            return Err(Error::TooShort { need: 2, have: t });
        }
        let mut mu = vec![0.0; n];
        for j in 0..n {
            mu[j] = history.column(j).sum() / t as f64;
        }
        let mut sigma = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for u in 0..t {
                    acc += (history[[u, i]] - mu[i]) * (history[[u, j]] - mu[j]);
                }
                let c = acc / (t - 1) as f64;
                sigma[[i, j]] = c;
                sigma[[j, i]] = c;
            }
        }
        Self::new(mu, sigma, r_min, t)
    }

    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &Array2<f64> {
        &self.sigma
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn estimation_window(&self) -> usize {
        self.estimation_window
    }

    /// Portfolio variance `w' S w`.
    pub fn variance(&self, w: &[f64]) -> f64 {
        let n = self.n_assets();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += w[i] * self.sigma[[i, j]] * w[j];
            }
        }
        acc
    }
}

/// Solve one equality-constrained KKT system restricted to `support`:
/// stationarity rows for the supported weights plus the budget constraint
/// and, when `bind_return` is set, the return constraint as an equality.
fn support_solution(input: &MarkowitzInput, support: &[usize], bind_return: bool) -> Option<Vec<f64>> {
    let k = support.len();
    let extra = if bind_return { 2 } else { 1 };
    let dim = k + extra;
    let mut a = Array2::zeros((dim, dim));
    let mut b = Array1::zeros(dim);
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            a[[r, c]] = 2.0 * input.sigma[[i, j]];
        }
        a[[r, k]] = 1.0;
        a[[k, r]] = 1.0;
        if bind_return {
            a[[r, k + 1]] = input.mu[i];
            a[[k + 1, r]] = input.mu[i];
        }
    }
    b[k] = 1.0;
    if bind_return {
        b[k + 1] = input.r_min;
    }
    let sol = solve(a, b).ok()?;
    let mut w = vec![0.0; input.n_assets()];
    for (r, &i) in support.iter().enumerate() {
        w[i] = sol[r];
    }
    Some(w)
}

/// Exact long-only minimum-variance weights at the target return, found by
/// enumerating every support set with the return constraint either slack or
/// binding and keeping the feasible candidate of least variance.
pub fn markowitz_weights(input: &MarkowitzInput) -> Result<ActionVector> {
    let n = input.n_assets();
    if n > MAX_ENUM_ASSETS {
        return Err(Error::Config(format!(
            "support enumeration handles at most {MAX_ENUM_ASSETS} assets, got {n}"
        )));
    }
    let max_mu = input.mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if input.r_min > max_mu {
        return Err(Error::Infeasible(format!(
            "return target {} exceeds best asset return {max_mu}",
            input.r_min
        )));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        for bind_return in [false, true] {
            let Some(mut w) = support_solution(input, &support, bind_return) else {
                continue;
            };
            if w.iter().any(|v| *v < -1e-9) {
                continue;
            }
            for v in w.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                continue;
            }
            for v in w.iter_mut() {
                *v /= total;
            }
            let ret: f64 = w.iter().zip(&input.mu).map(|(wi, mi)| wi * mi).sum();
            if ret < input.r_min - 1e-9 {
                continue;
            }
            let var = input.variance(&w);
            if best.as_ref().is_none_or(|(bv, _)| var < *bv) {
                best = Some((var, w));
            }
        }
    }
    let (_, w) = best.ok_or_else(|| {
        Error::Infeasible(format!("no feasible support at return target {}", input.r_min))
    })?;
    ActionVector::new(w)
}

/// Equal weights across all candidate strategies.
pub fn average_weights(n: usize) -> Result<ActionVector> {
    ActionVector::uniform(n)
}

/// One-hot on the strategy with the best compounded return over
/// `[t - lookback_days, t)`; ties go to the lowest column index.
pub fn winner_weights(panel: &StrategyPanel, t: usize, lookback_days: usize) -> Result<ActionVector> {
    if lookback_days == 0 {
        return Err(Error::Config("zero winner lookback".into()));
    }
    if t > panel.len() {
        return Err(Error::Shape(format!("row {t} of {}", panel.len())));
    }
    if t < lookback_days + 1 {
        // Row 0 is the synthetic base row; a full lookback of real returns
        // needs t - lookback >= 1.
        return Err(Error::TooShort { need: lookback_days + 1, have: t });
    }
    let rets = panel.returns();
    let n = panel.n_strategies();
    let mut best_j = 0usize;
    let mut best_growth = f64::NEG_INFINITY;
    for j in 0..n {
        let mut growth = 1.0;
        for u in t - lookback_days..t {
            growth *= 1.0 + rets[[u, j]];
        }
        if growth > best_growth {
            best_growth = growth;
            best_j = j;
        }
    }
    ActionVector::one_hot(n, best_j)
}
