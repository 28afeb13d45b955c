//! Exact reverse-mode differentiation of the episode objective.
//!
//! The discounted log-growth objective depends on the parameters through
//! every step's action and, via weight drift, through the turnover charged
//! at the following step. The backward pass threads both paths: the direct
//! reward sensitivity and the one-step-ahead cost sensitivity propagated
//! through the drift Jacobian, then backpropagates each step's action
//! gradient through the network against freshly recomputed activations.

use super::{backward, forward_cached, PolicyParams};
use crate::error::{Error, Result};
use crate::rl_env::{PortfolioEnv, StepDetail};

/// Flat gradient vector aligned with [`PolicyParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    values: Vec<f64>,
}

impl GradientSet {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute coordinate.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sign with the subgradient convention sign(0) = 0, used on the turnover
/// kinks.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Run one episode under the deterministic policy and return the discounted
/// objective together with its exact gradient with respect to the network
/// parameters. The objective value is identical to
/// [`PortfolioEnv::run_episode`] with [`super::forward`] as the policy.
pub fn episode_gradient(params: &PolicyParams, env: &PortfolioEnv) -> Result<(f64, GradientSet)> {
    let arch = params.arch();
    if arch.n_assets != env.n_assets() {
        return Err(Error::Shape(format!(
            "network outputs {} assets, environment has {}",
            arch.n_assets,
            env.n_assets()
        )));
    }
    if arch.window != env.config().window {
        return Err(Error::Shape(format!(
            "network window {} vs environment window {}",
            arch.window,
            env.config().window
        )));
    }
    if arch.context_rows != env.context_rows() {
        return Err(Error::Shape(format!(
            "network context rows {} vs environment {}",
            arch.context_rows,
            env.context_rows()
        )));
    }

    let horizon = env.horizon();
    let alpha = env.config().cost_rate;
    let gamma = env.config().gamma;

    let mut state = env.reset();
    let mut details: Vec<StepDetail> = Vec::with_capacity(horizon);
    let mut actions: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let obs = env.observe(&state)?;
        let (action, _) = forward_cached(params, &obs)?;
        let detail = env.step_detailed(&mut state, &action)?;
        actions.push(action.weights().to_vec());
        details.push(detail);
    }
    let objective = state.cum_reward;
    if !objective.is_finite() {
        return Err(Error::Numerical(format!("non-finite episode objective {objective}")));
    }

    let n = env.n_assets();
    let mut grad = vec![0.0; params.len()];
    for t in 0..horizon {
        let d = &details[t];
        let a = &actions[t];
        let scale_t = gamma.powi(t as i32) / d.net;

        // Direct path: d reward_t / d a_t.
        let mut abar: Vec<f64> = (0..n)
            .map(|j| scale_t * (d.relatives[j] - alpha * sgn(a[j] - d.holdings_before[j])))
            .collect();

        // Indirect path: a_t moves the drifted holdings, which are charged
        // against a_{t+1}'s turnover. d holdings_{t+1} / d a_t has entries
        // (u_j / gross) * (delta_ij - h_i) with h the drifted holdings.
        if t + 1 < horizon {
            let next = &details[t + 1];
            let a_next = &actions[t + 1];
            let h_next = &next.holdings_before;
            let scale_next = gamma.powi((t + 1) as i32) / next.net;
            let lambda: Vec<f64> =
                (0..n).map(|i| scale_next * alpha * sgn(a_next[i] - h_next[i])).collect();
            let lam_dot_h: f64 = lambda.iter().zip(h_next).map(|(l, h)| l * h).sum();
            for j in 0..n {
                abar[j] += d.relatives[j] / d.gross * (lambda[j] - lam_dot_h);
            }
        }

        // Recompute this step's activations and push the action gradient
        // through the network.
        let obs = env.observation_at(env.start() + t - 1)?;
        let (_, cache) = forward_cached(params, &obs)?;
        backward(params, &cache, &abar, &mut grad)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at step {t}")));
        }
    }

    Ok((objective, GradientSet::new(grad)))
}
