//! Policy training loop.
//!
//! Episodes repeat on the same market span. Each episode first runs an
//! exploratory rollout: with probability `explore_p` the policy's action is
//! used, otherwise a uniform random simplex draw, and Gaussian noise is
//! added to every observation the agent sees; the (o, a, o') transitions
//! fill a replay buffer that is reset at the start of every episode. The
//! terminal update then ascends the clean deterministic episode objective
//! with its exact gradient and one Adam step. Training stops when the step
//! budget is spent or the objective stops improving.

use crate::error::{Error, Result};
use crate::policy_net::{
    adam_update, episode_gradient, forward, init_params, AdamState, NetworkArch, PolicyParams,
};
use crate::rl_env::{ActionVector, EpisodeResult, Observation, PortfolioEnv};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::{Duration, Instant};

/// An episode objective must beat the best seen by this much to count as
/// improvement for early stopping.
pub const IMPROVEMENT_TOL: f64 = 1e-6;

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Total environment-step budget across all exploratory rollouts.
    pub max_steps: usize,
    /// Consecutive non-improving episodes tolerated before stopping.
    pub early_stop_patience: usize,
    /// Probability of taking the policy action during rollouts; the rest
    /// are uniform random simplex draws.
    pub explore_p: f64,
    /// Std dev of Gaussian noise added to rollout observations.
    pub obs_noise_std: f64,
    /// Adam learning rate.
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 100_000,
            early_stop_patience: 15,
            explore_p: 0.9,
            obs_noise_std: 0.002,
            lr: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("zero training step budget".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::Config("early-stop patience must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.explore_p) {
            return Err(Error::Config(format!("explore_p {} outside [0, 1]", self.explore_p)));
        }
        if !self.obs_noise_std.is_finite() || self.obs_noise_std < 0.0 {
            return Err(Error::Config(format!("observation noise {}", self.obs_noise_std)));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// One rollout transition: observation seen, action taken, next observation.
#[derive(Debug, Clone)]
pub struct Transition {
    pub before: Observation,
    pub action: ActionVector,
    pub after: Observation,
}

/// Per-episode transition store, reset at every episode start.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.items.clear();
    }

    pub fn push(&mut self, transition: Transition) {
        self.items.push(transition);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Transition> {
        self.items.iter()
    }
}

/// Why training ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The environment-step budget was exhausted.
    MaxSteps,
    /// The objective failed to improve for `early_stop_patience` episodes.
    NoImprovement,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Clean (noise-free, exploration-free) objective per episode, measured
    /// before that episode's parameter update.
    pub episode_rewards: Vec<f64>,
    pub best_reward: f64,
    /// Index into `episode_rewards` of the best episode.
    pub best_episode: usize,
    pub best_params: PolicyParams,
    pub stop: StopReason,
    /// Environment steps consumed by exploratory rollouts.
    pub steps_used: usize,
    /// Replay buffer length at the end of the final episode.
    pub replay_len: usize,
    pub wall_clock: Duration,
}

/// Uniform draw from the probability simplex (Dirichlet with all
/// concentrations 1), via normalized exponentials.
pub fn random_simplex_action(n: usize, rng: &mut impl RngCore) -> Result<ActionVector> {
    if n == 0 {
        return Err(Error::Shape("empty action vector".into()));
    }
    if n == 1 {
        return ActionVector::new(vec![1.0]);
    }
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 {
        return ActionVector::uniform(n);
    }
    ActionVector::new(draws.iter().map(|e| e / sum).collect())
}

/// Observation with i.i.d. Gaussian noise on every entry; the volatility
/// channel is clamped at zero to preserve its sign invariant.
pub(crate) fn noisy_observation(
    obs: &Observation,
    std_dev: f64,
    rng: &mut impl RngCore,
) -> Result<Observation> {
    if std_dev == 0.0 {
        return Ok(obs.clone());
    }
    let mut draw = |x: f64| {
        let z: f64 = StandardNormal.sample(rng);
        x + std_dev * z
    };
    let returns = obs.returns.map(|v| draw(*v));
    let vols = obs.vols.map(|v| draw(*v).max(0.0));
    let context = obs.context.map(|v| draw(*v));
    Observation::new(returns, vols, context)
}

/// Run the episode training loop and return the best parameters found.
///
/// Parameters start from a deterministic seed-derived initialization. Every
/// episode: reset the buffer, roll out with exploration and observation
/// noise, then take one Adam ascent step on the exact gradient of the clean
/// episode objective. The step budget counts rollout steps.
pub fn train_policy(env: &PortfolioEnv, arch: &NetworkArch, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    arch.validate()?;
    let horizon = env.horizon();
    if cfg.max_steps < horizon {
        return Err(Error::Config(format!(
            "step budget {} is smaller than one episode ({horizon} steps)",
            cfg.max_steps
        )));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(arch, cfg.seed)?;
    let mut adam = AdamState::with_lr(params.len(), cfg.lr);
    let mut buffer = ReplayBuffer::new();

    let mut episode_rewards = Vec::new();
    let mut best_reward = f64::NEG_INFINITY;
    let mut best_episode = 0usize;
    let mut best_params = params.clone();
    let mut stale = 0usize;
    let mut steps_used = 0usize;
    let mut stop = StopReason::MaxSteps;

    while steps_used + horizon <= cfg.max_steps {
        buffer.reset();
        let mut state = env.reset();
        for _ in 0..horizon {
            let seen = noisy_observation(&env.observe(&state)?, cfg.obs_noise_std, &mut rng)?;
            let use_policy = rng.random::<f64>() < cfg.explore_p;
            let action = if use_policy {
                forward(&params, &seen)?
            } else {
                random_simplex_action(env.n_assets(), &mut rng)?
            };
            env.step(&mut state, &action)?;
            let after = noisy_observation(&env.observe(&state)?, cfg.obs_noise_std, &mut rng)?;
            buffer.push(Transition { before: seen, action, after });
        }
        steps_used += horizon;

        let (objective, grads) = episode_gradient(&params, env)?;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite objective at episode {}",
                episode_rewards.len()
            )));
        }
        episode_rewards.push(objective);
        if objective > best_reward + IMPROVEMENT_TOL || episode_rewards.len() == 1 {
            best_reward = objective;
            best_episode = episode_rewards.len() - 1;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                stop = StopReason::NoImprovement;
                adam_update(&mut params, &grads, &mut adam)?;
                break;
            }
        }
        adam_update(&mut params, &grads, &mut adam)?;
    }

    Ok(TrainReport {
        episode_rewards,
        best_reward,
        best_episode,
        best_params,
        stop,
        steps_used,
        replay_len: buffer.len(),
        wall_clock: started.elapsed(),
    })
}

/// Deterministic evaluation: run one clean episode under the stored policy.
pub fn evaluate_policy(params: &PolicyParams, env: &PortfolioEnv) -> Result<EpisodeResult> {
    env.run_episode(|obs| forward(params, obs))
}

/// Write the per-episode training log as `episode,reward,best` CSV rows.
pub fn write_training_log(path: &Path, report: &TrainReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["episode", "reward", "best"])?;
    let mut best = f64::NEG_INFINITY;
    for (i, r) in report.episode_rewards.iter().enumerate() {
        best = best.max(*r);
        writer.write_record([i.to_string(), format!("{r:.12e}"), format!("{best:.12e}")])?;
    }
    writer.flush()?;
    Ok(())
}
