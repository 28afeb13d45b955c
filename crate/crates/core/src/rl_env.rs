//! Portfolio allocation environment.
//!
//! A finite-horizon MDP over a panel of candidate strategies. Each step the
//! agent chooses a long-only weight vector on the simplex, earns the weighted
//! gross return net of proportional trading costs, and observes a windowed
//! tensor of recent strategy returns, their rolling volatilities, and
//! auxiliary context rows. Rewards are log net relatives, so the cumulative
//! undiscounted reward is the episode's total log growth.

use crate::error::{Error, Result};
use crate::market_data::{window_std, SeriesPanel};
use crate::vol_forecast::DEFAULT_VOL_WINDOW;
use crate::vol_target::StrategyPanel;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Tolerance on simplex membership for action vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Context rows derived from the strategy panel itself: cross-sectional
/// max return, min return, and max rolling volatility.
pub const DERIVED_CONTEXT_ROWS: usize = 3;

/// A long-only portfolio weight vector on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector {
    weights: Vec<f64>,
}

impl ActionVector {
    /// Validate and wrap a weight vector: finite, nonnegative, summing to one
    /// within [`SIMPLEX_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Shape("empty action vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("non-finite action weight".into()));
        }
        if let Some(w) = weights.iter().find(|w| **w < -SIMPLEX_TOL) {
            return Err(Error::Domain(format!("negative action weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("action weights sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Equal weights over `n` assets.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("empty action vector".into()));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    /// All weight on asset `i`.
    pub fn one_hot(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::Shape(format!("one-hot index {i} of {n}")));
        }
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Environment parameters. The exploration fields are not used by the
/// environment dynamics themselves; they are carried here so a training run
/// is fully described by one config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Proportional cost per unit of one-way turnover.
    pub cost_rate: f64,
    /// Number of trailing observations in each observation window.
    pub window: usize,
    /// Per-step discount factor in (0, 1].
    pub gamma: f64,
    /// Mask the volatility channel and all context rows to zero, leaving
    /// only raw strategy returns visible to the policy.
    pub returns_only: bool,
    /// Probability of replacing the policy action with a random simplex
    /// draw during training.
    pub explore_prob: f64,
    /// Std dev of Gaussian noise added to observations during training.
    pub obs_noise_std: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            cost_rate: 1e-4,
            window: 60,
            gamma: 1.0,
            returns_only: false,
            explore_prob: 0.9,
            obs_noise_std: 0.002,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.cost_rate.is_finite() || self.cost_rate < 0.0 {
            return Err(Error::Config(format!("cost rate {} must be >= 0", self.cost_rate)));
        }
        if self.window < 2 {
            return Err(Error::Config(format!("observation window {} < 2", self.window)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("discount {} outside (0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.explore_prob) {
            return Err(Error::Config(format!("explore probability {}", self.explore_prob)));
        }
        if !self.obs_noise_std.is_finite() || self.obs_noise_std < 0.0 {
            return Err(Error::Config(format!("observation noise {}", self.obs_noise_std)));
        }
        Ok(())
    }
}

/// What the policy sees before choosing weights: a two-channel asset block
/// (recent returns and their rolling vol, each `n x w`) plus a context block
/// (`p x w`).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Strategy returns over the window, one row per strategy.
    pub returns: Array2<f64>,
    /// Rolling std of each strategy's returns, same shape as `returns`.
    pub vols: Array2<f64>,
    /// Context rows: user-provided series followed by the derived
    /// cross-sectional max/min return and max vol rows.
    pub context: Array2<f64>,
}

impl Observation {
    /// Validate shape coherence and the nonnegative-volatility invariant.
    pub fn new(returns: Array2<f64>, vols: Array2<f64>, context: Array2<f64>) -> Result<Self> {
        if returns.dim() != vols.dim() {
            return Err(Error::Shape(format!(
                "returns {:?} vs vols {:?}",
                returns.dim(),
                vols.dim()
            )));
        }
        if context.ncols() != returns.ncols() {
            return Err(Error::Shape(format!(
                "context width {} vs window {}",
                context.ncols(),
                returns.ncols()
            )));
        }
        if returns.nrows() == 0 || returns.ncols() == 0 {
            return Err(Error::Shape("empty observation".into()));
        }
        let finite = returns.iter().chain(vols.iter()).chain(context.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite observation value".into()));
        }
        if vols.iter().any(|v| *v < 0.0) {
            return Err(Error::Domain("negative volatility in observation".into()));
        }
        Ok(Self { returns, vols, context })
    }

    pub fn n_assets(&self) -> usize {
        self.returns.nrows()
    }

    pub fn window(&self) -> usize {
        self.returns.ncols()
    }

    pub fn context_rows(&self) -> usize {
        self.context.nrows()
    }
}

/// Renormalized portfolio weights after one period of price motion:
/// `w_i * u_i / (w . u)`.
pub fn drift_weights(weights: &[f64], relatives: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != relatives.len() {
        return Err(Error::Shape(format!(
            "{} weights vs {} relatives",
            weights.len(),
            relatives.len()
        )));
    }
    if relatives.iter().any(|u| !u.is_finite() || *u <= 0.0) {
        return Err(Error::Domain("price relative must be positive".into()));
    }
    let grown: Vec<f64> = weights.iter().zip(relatives).map(|(w, u)| w * u).collect();
    let total: f64 = grown.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical(format!("non-positive portfolio value {total}")));
    }
    Ok(grown.into_iter().map(|g| g / total).collect())
}

/// Mutable episode state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Index into the panel rows of the next return to be realized.
    pub t: usize,
    /// Post-drift holdings carried into the next step. All zeros before the
    /// first trade (the portfolio starts in cash), so the first step pays
    /// cost on a full unit of turnover.
    pub holdings: Vec<f64>,
    /// Discounted sum of log rewards collected so far.
    pub cum_reward: f64,
}

/// Per-episode output: total discounted reward, the per-step rewards, and the
/// chosen weight trajectory.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub cumulative_reward: f64,
    pub rewards: Vec<f64>,
    pub actions: Vec<ActionVector>,
}

/// Intermediate quantities of one environment step, exposed so gradient code
/// can reuse the exact accounting of [`PortfolioEnv::step`].
#[derive(Debug, Clone)]
pub struct StepDetail {
    /// Log of the net relative.
    pub reward: f64,
    /// Net relative after trading costs.
    pub net: f64,
    /// Pre-cost portfolio relative `a . u`.
    pub gross: f64,
    /// Price relatives realized this step.
    pub relatives: Vec<f64>,
    /// Holdings the action was traded against.
    pub holdings_before: Vec<f64>,
}

/// Build the observation whose windows end at panel row `t`: returns over
/// rows `[t-w+1, t]`, their trailing [`DEFAULT_VOL_WINDOW`]-day rolling std,
/// and the context block (user rows plus derived cross-sections). Requires
/// `t >= w + DEFAULT_VOL_WINDOW` so every rolling window clears the panel's
/// base row.
pub fn build_observation(
    panel: &StrategyPanel,
    context: Option<&SeriesPanel>,
    t: usize,
    window: usize,
    returns_only: bool,
) -> Result<Observation> {
    if window < 2 {
        return Err(Error::Config(format!("observation window {window} < 2")));
    }
    let need = window + DEFAULT_VOL_WINDOW;
    if t < need {
        return Err(Error::TooShort { need, have: t });
    }
    if t >= panel.len() {
        return Err(Error::Shape(format!("row {t} of {}", panel.len())));
    }
    if let Some(ctx) = context {
        if ctx.dates() != panel.dates() {
            return Err(Error::Misaligned("context dates differ from strategy panel".into()));
        }
    }
    let n = panel.n_strategies();
    let rets = panel.returns();
    let first = t + 1 - window;
    let mut returns = Array2::zeros((n, window));
    let mut vols = Array2::zeros((n, window));
    for (c, u) in (first..=t).enumerate() {
        for i in 0..n {
            returns[[i, c]] = rets[[u, i]];
            let lo = u + 1 - DEFAULT_VOL_WINDOW;
            let w: Vec<f64> = (lo..=u).map(|v| rets[[v, i]]).collect();
            vols[[i, c]] = window_std(&w);
        }
    }
    let user_rows = context.map_or(0, |c| c.n_cols());
    let mut ctx_block = Array2::zeros((user_rows + DERIVED_CONTEXT_ROWS, window));
    for (c, u) in (first..=t).enumerate() {
        if let Some(ctx) = context {
            for j in 0..user_rows {
                ctx_block[[j, c]] = ctx.values()[[u, j]];
            }
        }
        let col_rets = (0..n).map(|i| returns[[i, c]]);
        ctx_block[[user_rows, c]] = col_rets.clone().fold(f64::NEG_INFINITY, f64::max);
        ctx_block[[user_rows + 1, c]] = col_rets.fold(f64::INFINITY, f64::min);
        ctx_block[[user_rows + 2, c]] =
            (0..n).map(|i| vols[[i, c]]).fold(f64::NEG_INFINITY, f64::max);
    }
    if returns_only {
        vols.fill(0.0);
        ctx_block.fill(0.0);
    }
    Observation::new(returns, vols, ctx_block)
}

/// The environment: a borrowed strategy panel, optional aligned context, and
/// the step parameters.
#[derive(Debug, Clone)]
pub struct PortfolioEnv<'a> {
    panel: &'a StrategyPanel,
    context: Option<&'a SeriesPanel>,
    config: EnvConfig,
    start: usize,
}

impl<'a> PortfolioEnv<'a> {
    pub fn new(
        panel: &'a StrategyPanel,
        context: Option<&'a SeriesPanel>,
        config: EnvConfig,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(ctx) = context {
            if ctx.dates() != panel.dates() {
                return Err(Error::Misaligned("context dates differ from strategy panel".into()));
            }
        }
        let start = config.window + DEFAULT_VOL_WINDOW + 1;
        if panel.len() <= start {
            return Err(Error::TooShort { need: start + 1, have: panel.len() });
        }
        Ok(Self { panel, context, config, start })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn panel(&self) -> &StrategyPanel {
        self.panel
    }

    pub fn n_assets(&self) -> usize {
        self.panel.n_strategies()
    }

    /// First panel row the agent trades on.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Number of steps in a full episode.
    pub fn horizon(&self) -> usize {
        self.panel.len() - self.start
    }

    /// Dates of the traded rows, one per step.
    pub fn step_dates(&self) -> &[chrono::NaiveDate] {
        &self.panel.dates()[self.start..]
    }

    /// Number of context rows in each observation.
    pub fn context_rows(&self) -> usize {
        self.context.map_or(0, |c| c.n_cols()) + DERIVED_CONTEXT_ROWS
    }

    pub fn reset(&self) -> EnvState {
        EnvState { t: self.start, holdings: vec![0.0; self.n_assets()], cum_reward: 0.0 }
    }

    /// Observation available when choosing the action for `state.t`; its
    /// windows end at the previous row, so no information from the return
    /// being traded leaks in.
    pub fn observe(&self, state: &EnvState) -> Result<Observation> {
        self.observation_at(state.t - 1)
    }

    /// Observation whose windows end at panel row `t`.
    pub fn observation_at(&self, t: usize) -> Result<Observation> {
        build_observation(self.panel, self.context, t, self.config.window, self.config.returns_only)
    }

    /// Realize row `state.t` under `action`: net relative is the weighted
    /// gross relative minus `cost_rate` times one-way turnover against the
    /// drifted holdings. Returns the undiscounted log reward and advances
    /// the state. A non-positive net relative aborts the episode.
    pub fn step(&self, state: &mut EnvState, action: &ActionVector) -> Result<f64> {
        Ok(self.step_detailed(state, action)?.reward)
    }

    /// [`PortfolioEnv::step`] plus the intermediate accounting quantities.
    pub fn step_detailed(&self, state: &mut EnvState, action: &ActionVector) -> Result<StepDetail> {
        let n = self.n_assets();
        if action.len() != n {
            return Err(Error::Shape(format!("{} action weights vs {n} assets", action.len())));
        }
        if state.t >= self.panel.len() {
            return Err(Error::Domain(format!("episode exhausted at row {}", state.t)));
        }
        let rets = self.panel.returns();
        let relatives: Vec<f64> = (0..n).map(|i| 1.0 + rets[[state.t, i]]).collect();
        let gross: f64 =
            action.weights().iter().zip(&relatives).map(|(a, u)| a * u).sum();
        let turnover: f64 = action
            .weights()
            .iter()
            .zip(&state.holdings)
            .map(|(a, h)| (a - h).abs())
            .sum();
        let net = gross - self.config.cost_rate * turnover;
        if net <= 0.0 {
            return Err(Error::EpisodeAborted { step: state.t - self.start, net });
        }
        let reward = net.ln();
        let k = (state.t - self.start) as i32;
        state.cum_reward += self.config.gamma.powi(k) * reward;
        let holdings_before = std::mem::replace(
            &mut state.holdings,
            drift_weights(action.weights(), &relatives)?,
        );
        state.t += 1;
        Ok(StepDetail { reward, net, gross, relatives, holdings_before })
    }

    /// Run a full episode under `policy`, which maps each observation to an
    /// action. Returns the discounted total reward and the action
    /// trajectory.
    pub fn run_episode<P>(&self, mut policy: P) -> Result<EpisodeResult>
    where
        P: FnMut(&Observation) -> Result<ActionVector>,
    {
        let mut state = self.reset();
        let horizon = self.horizon();
        let mut rewards = Vec::with_capacity(horizon);
        let mut actions = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let obs = self.observe(&state)?;
            let action = policy(&obs)?;
            let reward = self.step(&mut state, &action)?;
            rewards.push(reward);
            actions.push(action);
        }
        Ok(EpisodeResult { cumulative_reward: state.cum_reward, rewards, actions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::weekday_calendar;
    use chrono::NaiveDate;
    use ndarray::Array1;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn panel_from_returns(returns: Array2<f64>) -> StrategyPanel {
        let n = returns.ncols();
        let dates = weekday_calendar(day(2015, 1, 5), returns.nrows());
        let names = (0..n).map(|j| format!("s{j}")).collect();
        StrategyPanel::from_returns(day(2015, 1, 2), dates, names, returns).unwrap()
    }

    fn constant_panel(len: usize, n: usize, value: f64) -> StrategyPanel {
        panel_from_returns(Array2::from_elem((len, n), value))
    }

    /// Default config with a short 20-day observation window so small test
    /// panels leave room for at least one step.
    fn cfg20() -> EnvConfig {
        EnvConfig { window: 20, ..Default::default() }
    }

    #[test]
    fn action_vector_validation() {
        assert!(ActionVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ActionVector::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        assert!(ActionVector::new(vec![0.6, 0.5]).is_err());
        assert!(ActionVector::new(vec![1.01, -0.01]).is_err());
        assert!(ActionVector::new(vec![]).is_err());
        assert!(ActionVector::new(vec![f64::NAN, 1.0]).is_err());
        let u = ActionVector::uniform(4).unwrap();
        assert_eq!(u.weights(), &[0.25, 0.25, 0.25, 0.25]);
        let h = ActionVector::one_hot(3, 2).unwrap();
        assert_eq!(h.weights(), &[0.0, 0.0, 1.0]);
        assert!(ActionVector::one_hot(3, 3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig::default().validate().is_ok());
        assert_eq!(EnvConfig::default().window, 60);
        assert_eq!(EnvConfig::default().cost_rate, 1e-4);
        assert!(EnvConfig { cost_rate: -0.1, ..Default::default() }.validate().is_err());
        assert!(EnvConfig { window: 1, ..Default::default() }.validate().is_err());
        assert!(EnvConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(EnvConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(EnvConfig { explore_prob: 1.2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn drift_hand_example() {
        let w = drift_weights(&[0.5, 0.5], &[1.1, 0.9]).unwrap();
        assert!((w[0] - 0.55).abs() < 1e-15);
        assert!((w[1] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn drift_flat_market_is_identity() {
        let w = drift_weights(&[0.3, 0.2, 0.5], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(w, vec![0.3, 0.2, 0.5]);
    }

    #[test]
    fn drift_one_hot_is_absorbing() {
        let w = drift_weights(&[0.0, 1.0, 0.0], &[1.3, 0.7, 1.01]).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn drift_rejects_bad_relatives() {
        assert!(drift_weights(&[1.0], &[0.0]).is_err());
        assert!(drift_weights(&[1.0], &[-0.5]).is_err());
        assert!(drift_weights(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn flat_market_first_step_costs_full_turnover() {
        let panel = constant_panel(60, 2, 0.0);
        let env = PortfolioEnv::new(&panel, None, cfg20()).unwrap();
        let mut state = env.reset();
        let a = ActionVector::uniform(2).unwrap();
        let r1 = env.step(&mut state, &a).unwrap();
        assert_eq!(r1, (1.0f64 - 1e-4).ln());
        let r2 = env.step(&mut state, &a).unwrap();
        assert_eq!(r2, 0.0);
    }

    #[test]
    fn full_switch_pays_double_turnover() {
        let panel = constant_panel(60, 2, 0.0);
        let env = PortfolioEnv::new(&panel, None, cfg20()).unwrap();
        let mut state = env.reset();
        env.step(&mut state, &ActionVector::one_hot(2, 0).unwrap()).unwrap();
        let r = env.step(&mut state, &ActionVector::one_hot(2, 1).unwrap()).unwrap();
        assert_eq!(r, (1.0f64 - 2e-4).ln());
    }

    #[test]
    fn non_positive_net_aborts_with_diagnostics() {
        let panel = constant_panel(60, 2, 0.0);
        let cfg = EnvConfig { cost_rate: 0.6, ..cfg20() };
        let env = PortfolioEnv::new(&panel, None, cfg).unwrap();
        let mut state = env.reset();
        env.step(&mut state, &ActionVector::one_hot(2, 0).unwrap()).unwrap();
        let err = env.step(&mut state, &ActionVector::one_hot(2, 1).unwrap()).unwrap_err();
        match err {
            Error::EpisodeAborted { step, net } => {
                assert_eq!(step, 1);
                assert!((net - (1.0 - 1.2)).abs() < 1e-12);
            }
            other => panic!("expected abort, got {other}"),
        }
    }

    #[test]
    fn zero_cost_exactly_when_action_matches_drifted_holdings() {
        let mut returns = Array2::zeros((60, 2));
        for t in 0..60 {
            returns[[t, 0]] = 0.01 * ((t % 5) as f64 - 2.0) / 2.0;
            returns[[t, 1]] = -0.008 * ((t % 3) as f64 - 1.0);
        }
        let panel = panel_from_returns(returns);
        let env = PortfolioEnv::new(&panel, None, cfg20()).unwrap();
        let mut state = env.reset();
        env.step(&mut state, &ActionVector::uniform(2).unwrap()).unwrap();

        let drifted = state.holdings.clone();
        let t = state.t;
        let rets = panel.returns();
        let gross: f64 = drifted
            .iter()
            .enumerate()
            .map(|(i, h)| h * (1.0 + rets[[t, i]]))
            .sum();

        let mut replay = state.clone();
        let hold = ActionVector::new(drifted).unwrap();
        let r_hold = env.step(&mut replay, &hold).unwrap();
        assert_eq!(r_hold, gross.ln());

        let mut replay = state.clone();
        let trade = ActionVector::uniform(2).unwrap();
        let r_trade = env.step(&mut replay, &trade).unwrap();
        let gross_trade: f64 =
            (0..2).map(|i| 0.5 * (1.0 + rets[[t, i]])).sum();
        assert!(r_trade < gross_trade.ln());
    }

    #[test]
    fn single_asset_no_cost_equals_total_log_return() {
        let mut returns = Array2::zeros((200, 1));
        for t in 0..200 {
            returns[[t, 0]] = 0.002 * ((t as f64) * 0.7).sin() + 0.0003;
        }
        let panel = panel_from_returns(returns);
        let cfg = EnvConfig { cost_rate: 0.0, ..cfg20() };
        let env = PortfolioEnv::new(&panel, None, cfg).unwrap();
        let result = env
            .run_episode(|_| ActionVector::new(vec![1.0]))
            .unwrap();
        let rets = panel.returns();
        let oracle: f64 = (env.start()..panel.len()).map(|t| (1.0 + rets[[t, 0]]).ln()).sum();
        assert!((result.cumulative_reward - oracle).abs() < 1e-12);
        assert_eq!(result.rewards.len(), env.horizon());
    }

    #[test]
    fn identical_assets_constant_policy_is_buy_and_hold_less_entry_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut returns = Array2::zeros((150, 2));
        for t in 0..150 {
            let r = 0.01 * (rng.random::<f64>() - 0.5);
            returns[[t, 0]] = r;
            returns[[t, 1]] = r;
        }
        let panel = panel_from_returns(returns);
        let env = PortfolioEnv::new(&panel, None, cfg20()).unwrap();
        let result = env.run_episode(|_| ActionVector::uniform(2)).unwrap();
        let rets = panel.returns();
        let start = env.start();
        let u0 = 1.0 + rets[[start, 0]];
        let buy_hold: f64 = (start..panel.len()).map(|t| (1.0 + rets[[t, 0]]).ln()).sum();
        let oracle = buy_hold + (u0 - 1e-4).ln() - u0.ln();
        assert!((result.cumulative_reward - oracle).abs() < 1e-12);
    }

    #[test]
    fn discounting_matches_geometric_sum() {
        let panel = constant_panel(80, 1, 0.01);
        let cfg = EnvConfig { cost_rate: 0.0, gamma: 0.5, ..cfg20() };
        let env = PortfolioEnv::new(&panel, None, cfg).unwrap();
        let result = env.run_episode(|_| ActionVector::new(vec![1.0])).unwrap();
        let h = env.horizon() as f64;
        let oracle = 1.01f64.ln() * (1.0 - 0.5f64.powf(h)) / (1.0 - 0.5);
        assert!((result.cumulative_reward - oracle).abs() < 1e-12);
    }

    #[test]
    fn observation_shapes_windows_and_derived_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut returns = Array2::zeros((40, 3));
        for v in returns.iter_mut() {
            *v = 0.02 * (rng.random::<f64>() - 0.5);
        }
        let panel = panel_from_returns(returns);
        let ctx_vals = Array1::from_iter((0..panel.len()).map(|t| t as f64 * 0.1))
            .into_shape_with_order((panel.len(), 1))
            .unwrap();
        let ctx = SeriesPanel::new(
            panel.dates().to_vec(),
            vec!["signal".into()],
            ctx_vals,
        )
        .unwrap();

        let w = 3;
        let t = w + DEFAULT_VOL_WINDOW;
        let obs = build_observation(&panel, Some(&ctx), t, w, false).unwrap();
        assert_eq!(obs.returns.dim(), (3, w));
        assert_eq!(obs.vols.dim(), (3, w));
        assert_eq!(obs.context.dim(), (1 + DERIVED_CONTEXT_ROWS, w));

        let rets = panel.returns();
        for c in 0..w {
            let u = t + 1 - w + c;
            for i in 0..3 {
                assert_eq!(obs.returns[[i, c]], rets[[u, i]]);
                let win: Vec<f64> =
                    (u + 1 - DEFAULT_VOL_WINDOW..=u).map(|v| rets[[v, i]]).collect();
                let mean = win.iter().sum::<f64>() / win.len() as f64;
                let ss: f64 = win.iter().map(|x| (x - mean) * (x - mean)).sum();
                let sd = (ss / (win.len() as f64 - 1.0)).sqrt();
                assert!((obs.vols[[i, c]] - sd).abs() < 1e-15);
            }
            assert_eq!(obs.context[[0, c]], u as f64 * 0.1);
            let col: Vec<f64> = (0..3).map(|i| obs.returns[[i, c]]).collect();
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(obs.context[[1, c]], max);
            assert_eq!(obs.context[[2, c]], min);
            let vmax = (0..3).map(|i| obs.vols[[i, c]]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(obs.context[[3, c]], vmax);
        }

        assert!(build_observation(&panel, Some(&ctx), t - 1, w, false).is_err());
        assert!(build_observation(&panel, Some(&ctx), panel.len(), w, false).is_err());
    }

    #[test]
    fn returns_only_mask_zeroes_vol_and_context() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut returns = Array2::zeros((50, 2));
        for v in returns.iter_mut() {
            *v = 0.02 * (rng.random::<f64>() - 0.5);
        }
        let panel = panel_from_returns(returns);
        let t = 5 + DEFAULT_VOL_WINDOW;
        let open = build_observation(&panel, None, t, 5, false).unwrap();
        let masked = build_observation(&panel, None, t, 5, true).unwrap();
        assert_eq!(masked.returns, open.returns);
        assert!(masked.vols.iter().all(|v| *v == 0.0));
        assert!(masked.context.iter().all(|v| *v == 0.0));
        assert!(open.vols.iter().any(|v| *v > 0.0));
    }

    #[test]
    fn constant_returns_have_zero_vol_channel() {
        let panel = constant_panel(60, 2, 0.004);
        let t = 10 + DEFAULT_VOL_WINDOW;
        let obs = build_observation(&panel, None, t, 10, false).unwrap();
        assert!(obs.vols.iter().all(|v| *v == 0.0));
        assert!(obs.returns.iter().all(|v| *v == 0.004));
    }

    #[test]
    fn too_short_market_is_rejected() {
        let panel = constant_panel(21, 2, 0.0);
        let err = PortfolioEnv::new(&panel, None, cfg20()).unwrap_err();
        assert!(matches!(err, Error::TooShort { .. }));
    }

    #[test]
    fn misaligned_context_is_rejected() {
        let panel = constant_panel(60, 2, 0.0);
        let other_dates = weekday_calendar(day(2016, 1, 4), panel.len());
        let ctx = SeriesPanel::new(
            other_dates,
            vec!["signal".into()],
            Array2::zeros((panel.len(), 1)),
        )
        .unwrap();
        let err = PortfolioEnv::new(&panel, Some(&ctx), cfg20()).unwrap_err();
        assert!(matches!(err, Error::Misaligned(_)));
    }

    #[test]
    fn observation_never_sees_the_traded_return() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut returns = Array2::zeros((70, 2));
        for v in returns.iter_mut() {
            *v = 0.02 * (rng.random::<f64>() - 0.5);
        }
        let mut bumped = returns.clone();
        let panel = panel_from_returns(returns);
        let env = PortfolioEnv::new(&panel, None, cfg20()).unwrap();
        let state = env.reset();
        let before = env.observe(&state).unwrap();

        // Perturbing the return realized at the first traded row must leave
        // that step's observation untouched.
        bumped[[env.start() - 1, 0]] += 0.05;
        let bumped_panel = panel_from_returns(bumped);
        let env2 = PortfolioEnv::new(&bumped_panel, None, cfg20()).unwrap();
        let after = env2.observe(&env2.reset()).unwrap();
        assert_eq!(before, after);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn drifted_weights_stay_on_simplex(
            raw in proptest::collection::vec(1e-6f64..1.0, 2..6),
            rel_seed in proptest::collection::vec(0.5f64..2.0, 2..6),
        ) {
            let n = raw.len().min(rel_seed.len());
            let total: f64 = raw[..n].iter().sum();
            let weights: Vec<f64> = raw[..n].iter().map(|w| w / total).collect();
            let relatives = &rel_seed[..n];
            let drifted = drift_weights(&weights, relatives).unwrap();
            let sum: f64 = drifted.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(drifted.iter().all(|w| *w >= 0.0));
        }

        #[test]
        fn step_reward_matches_manual_accounting(
            r0 in -0.04f64..0.04,
            r1 in -0.04f64..0.04,
            a0 in 0.0f64..1.0,
        ) {
            let mut returns = Array2::zeros((60, 2));
            for t in 0..60 {
                returns[[t, 0]] = r0;
                returns[[t, 1]] = r1;
            }
            let panel = panel_from_returns(returns);
            let env = PortfolioEnv::new(&panel, None, cfg20()).unwrap();
            let mut state = env.reset();
            let action = ActionVector::new(vec![a0, 1.0 - a0]).unwrap();
            let reward = env.step(&mut state, &action).unwrap();
            let gross = a0 * (1.0 + r0) + (1.0 - a0) * (1.0 + r1);
            let net = gross - 1e-4 * (a0.abs() + (1.0 - a0).abs());
            prop_assert!((reward - net.ln()).abs() < 1e-12);
        }
    }
}
