use crate::benchmarks::{markowitz_weights, MarkowitzInput};
use crate::error::{Error, Result};
use crate::evalkit::datastore::{AccessRecord, DataStore, Phase};
use crate::evalkit::splits::{walk_forward_splits, WalkForwardSplit};
use crate::market_data::{ReturnSeries, SeriesPanel};
use crate::policy_net::{forward, NetworkArch, PolicyParams};
use crate::rl_env::{ActionVector, EnvConfig, Observation, PortfolioEnv, DERIVED_CONTEXT_ROWS};
use crate::train::{train_policy, TrainConfig};
use crate::vol_forecast::{forecast_all, ForecastConfig, ForecastInputs, DEFAULT_VOL_WINDOW};
use crate::vol_target::{build_strategy_panel, TargetConfig};
use chrono::NaiveDate;
use ndarray::Array2;

/// Report row order: the two learned policies, then the reference allocators.
pub const MODEL_ORDER: [&str; 5] = ["DRL1", "DRL2", "Average", "Markowitz", "Winner"];

/// Settings of the reference allocators.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    /// Daily return target of the Markowitz allocator; clamped per rebalance
    /// to the best trailing mean when unreachable.
    pub markowitz_r_min: f64,
    /// Trailing estimation window (rows) for Markowitz moments.
    pub markowitz_window: usize,
    /// Rows between Markowitz re-optimizations.
    pub markowitz_rebalance: usize,
    /// Trailing window (rows) scored by the follow-the-winner rule.
    pub winner_lookback: usize,
    /// Rows between winner re-selections.
    pub winner_refresh: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            markowitz_r_min: 0.0,
            markowitz_window: 252,
            markowitz_rebalance: 21,
            winner_lookback: 252,
            winner_refresh: 252,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.markowitz_window < 2 {
            return Err(Error::Config("markowitz window must be at least 2 rows".into()));
        }
        if self.markowitz_rebalance == 0 || self.winner_refresh == 0 {
            return Err(Error::Config("rebalance periods must be positive".into()));
        }
        if self.winner_lookback == 0 {
            return Err(Error::Config("winner lookback must be positive".into()));
        }
        if !self.markowitz_r_min.is_finite() {
            return Err(Error::Config("non-finite markowitz return target".into()));
        }
        Ok(())
    }
}

/// Everything a full walk-forward comparison run needs.
#[derive(Debug, Clone)]
pub struct WalkForwardConfig {
    pub anchor_start: NaiveDate,
    pub first_test_year: i32,
    pub last_test_year: i32,
    pub forecast: ForecastConfig,
    pub target: TargetConfig,
    pub env: EnvConfig,
    pub arch: NetworkArch,
    pub train: TrainConfig,
    pub benchmarks: BenchmarkConfig,
}

/// Raw market inputs for a run.
#[derive(Debug, Clone, Copy)]
pub struct WalkForwardData<'a> {
    pub returns: &'a ReturnSeries,
    pub context: Option<&'a SeriesPanel>,
    pub implied: Option<&'a SeriesPanel>,
}

/// One model's stitched out-of-sample record across all test years.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    /// Net-of-cost daily portfolio returns.
    pub returns: Vec<f64>,
    /// Daily weight vectors, one row per date.
    pub allocations: Array2<f64>,
}

/// Full artifact set of a walk-forward comparison.
#[derive(Debug, Clone)]
pub struct WalkForwardOutcome {
    pub splits: Vec<WalkForwardSplit>,
    /// Stitched runs in [`MODEL_ORDER`].
    pub models: Vec<ModelRun>,
    /// Names of the targeting strategies the allocators choose between.
    pub strategy_names: Vec<String>,
    /// Occurrences of each forecast rank (1 = lowest volatility estimate)
    /// for the strategy DRL1 weighted most heavily, one bin per strategy.
    pub rank_counts: Vec<usize>,
    /// Every data request made during the run, across all splits.
    pub access_log: Vec<AccessRecord>,
    /// Trained DRL1 parameters from the final split.
    pub final_params: PolicyParams,
    /// DRL1's decision observations over the final split's test year.
    pub final_observations: Vec<Observation>,
}

impl WalkForwardOutcome {
    pub fn model(&self, name: &str) -> Result<&ModelRun> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::Config(format!("no model run named '{name}'")))
    }
}

/// Daily record of one out-of-sample episode.
struct OosRun {
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
    actions: Vec<ActionVector>,
}

/// Drive one episode with a per-step decision rule. The rule sees the slice
/// row being traded and the pre-trade state; observation access goes through
/// the environment so its windows stay strictly lagged.
fn run_out_of_sample<F>(env: &PortfolioEnv, mut decide: F) -> Result<OosRun>
where
    F: FnMut(usize, &crate::rl_env::EnvState) -> Result<ActionVector>,
{
    let mut state = env.reset();
    let total_rows = env.panel().len();
    let mut returns = Vec::with_capacity(env.horizon());
    let mut actions = Vec::with_capacity(env.horizon());
    while state.t < total_rows {
        let action = decide(state.t, &state)?;
        let detail = env.step_detailed(&mut state, &action)?;
        returns.push(detail.net - 1.0);
        actions.push(action);
    }
    Ok(OosRun { dates: env.step_dates().to_vec(), returns, actions })
}

/// Lowest-index argmax.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Rank of entry `j` when the values are ordered ascending, counting from 1;
/// ties resolve by index so ranks stay a permutation.
fn ascending_rank(values: &[f64], j: usize) -> usize {
    let mut rank = 1;
    for (k, v) in values.iter().enumerate() {
        if *v < values[j] || (*v == values[j] && k < j) {
            rank += 1;
        }
    }
    rank
}

/// Compounded-growth winner of a trailing return window, as a one-hot weight
/// vector; ties go to the lowest column.
fn winner_from_window(window: &Array2<f64>) -> Result<ActionVector> {
    let (t, n) = window.dim();
    if t == 0 || n == 0 {
        return Err(Error::Shape("empty winner lookback window".into()));
    }
    let mut growth = vec![1.0; n];
    for u in 0..t {
        for j in 0..n {
            growth[j] *= 1.0 + window[[u, j]];
        }
    }
    ActionVector::one_hot(n, argmax(&growth))
}

fn validate_run(data: &WalkForwardData, config: &WalkForwardConfig) -> Result<()> {
    config.env.validate()?;
    config.target.validate()?;
    config.benchmarks.validate()?;
    config.train.validate()?;
    let n_models = config.forecast.models.len();
    if config.arch.n_assets != n_models {
        return Err(Error::Config(format!(
            "network allocates over {} assets but {} forecast models are configured",
            config.arch.n_assets, n_models
        )));
    }
    if config.arch.window != config.env.window {
        return Err(Error::Config(format!(
            "network window {} differs from environment window {}",
            config.arch.window, config.env.window
        )));
    }
    let ctx_rows = data.context.map_or(0, |c| c.n_cols()) + DERIVED_CONTEXT_ROWS;
    if config.arch.context_rows != ctx_rows {
        return Err(Error::Config(format!(
            "network expects {} context rows but the data provides {ctx_rows}",
            config.arch.context_rows
        )));
    }
    config.arch.validate()?;
    if config.forecast.models.iter().any(|m| m.needs_implied()) && data.implied.is_none() {
        return Err(Error::Config(
            "implied-volatility models selected but no implied panel supplied".into(),
        ));
    }
    Ok(())
}

struct SplitOutput {
    dates: Vec<NaiveDate>,
    /// Per-model daily returns in [`MODEL_ORDER`].
    returns: [Vec<f64>; 5],
    actions: [Vec<ActionVector>; 5],
    rank_counts: Vec<usize>,
    access_log: Vec<AccessRecord>,
    drl1_params: PolicyParams,
    drl1_observations: Vec<Observation>,
}

fn run_split(
    data: &WalkForwardData,
    config: &WalkForwardConfig,
    split: &WalkForwardSplit,
    split_index: usize,
) -> Result<SplitOutput> {
    let returns = data.returns.up_to(split.test_end);
    let implied = data.implied.map(|p| p.up_to(split.test_end));
    let inputs = ForecastInputs { returns: &returns, implied: implied.as_ref() };
    let forecasts = forecast_all(&config.forecast, &inputs, Some(split.train_end))?;
    let panel = build_strategy_panel(&forecasts, &returns, &config.target)?;

    let context = match data.context {
        Some(ctx) => {
            let through = ctx.up_to(split.test_end);
            let c0 = through.index_of(panel.dates()[0]).ok_or_else(|| {
                Error::Misaligned(format!(
                    "context has no row for the panel base date {}",
                    panel.dates()[0]
                ))
            })?;
            if through.n_rows() < c0 + panel.len() {
                return Err(Error::TooShort {
                    need: c0 + panel.len(),
                    have: through.n_rows(),
                });
            }
            Some(through.slice_rows(c0, c0 + panel.len()))
        }
        None => None,
    };
    let store = DataStore::new(panel, context)?;

    let row_of = |date: NaiveDate, what: &str| {
        store.index_of(date).ok_or_else(|| {
            Error::Misaligned(format!("{what} {date} is not a strategy panel date"))
        })
    };
    let train_end_row = row_of(split.train_end, "train end")?;
    let test_start_row = row_of(split.test_start, "test start")?;
    let test_end_row = row_of(split.test_end, "test end")?;

    let warmup = config.env.window + DEFAULT_VOL_WINDOW + 1;
    if test_start_row <= warmup {
        return Err(Error::TooShort { need: warmup + 1, have: test_start_row });
    }
    if train_end_row <= warmup + 1 {
        return Err(Error::TooShort { need: warmup + 2, have: train_end_row });
    }
    let est_need = config.benchmarks.markowitz_window.max(config.benchmarks.winner_lookback);
    if test_start_row < est_need + 1 {
        return Err(Error::TooShort { need: est_need + 1, have: test_start_row });
    }

    // Training phase: both policies fit on data through the train end only.
    let (train_panel, train_ctx) = store.episode_slice(
        Phase::Training,
        split.train_end,
        0,
        train_end_row,
        "policy training data",
    )?;
    let mut drl_params = Vec::with_capacity(2);
    for (model_id, returns_only) in [(0u64, false), (1u64, true)] {
        let mut env_cfg = config.env.clone();
        env_cfg.returns_only = returns_only;
        let env = PortfolioEnv::new(&train_panel, train_ctx.as_ref(), env_cfg)?;
        let mut tc = config.train.clone();
        tc.seed = config
            .train
            .seed
            .wrapping_add((split_index as u64) << 8)
            .wrapping_add(model_id);
        let report = train_policy(&env, &config.arch, &tc)?;
        drl_params.push(report.best_params);
    }

    // Evaluation phase: one shared out-of-sample window, warmed up so the
    // first traded row is exactly the first test date.
    let oos_from = test_start_row - warmup;
    let (oos_panel, oos_ctx) = store.episode_slice(
        Phase::Evaluation,
        split.test_end,
        oos_from,
        test_end_row,
        "out-of-sample episode",
    )?;

    let mut runs: Vec<OosRun> = Vec::with_capacity(5);
    let mut drl1_observations = Vec::new();
    let mut rank_counts = vec![0usize; store.n_strategies()];
    for model in 0..5usize {
        let mut env_cfg = config.env.clone();
        env_cfg.returns_only = model == 1;
        let env = PortfolioEnv::new(&oos_panel, oos_ctx.as_ref(), env_cfg)?;
        if env.step_dates()[0] != split.test_start {
            return Err(Error::Misaligned(format!(
                "first traded date {} is not the test start {}",
                env.step_dates()[0],
                split.test_start
            )));
        }
        let run = match model {
            0 | 1 => {
                let params = &drl_params[model];
                let collect = model == 0;
                run_out_of_sample(&env, |_, state| {
                    let obs = env.observe(state)?;
                    let action = forward(params, &obs)?;
                    if collect {
                        drl1_observations.push(obs);
                    }
                    Ok(action)
                })?
            }
            2 => {
                let uniform = ActionVector::uniform(store.n_strategies())?;
                run_out_of_sample(&env, |_, _| Ok(uniform.clone()))?
            }
            3 => {
                let bc = &config.benchmarks;
                let mut held: Option<ActionVector> = None;
                let mut since_rebal = 0usize;
                run_out_of_sample(&env, |slice_t, state| {
                    let trade_row = oos_from + slice_t;
                    if held.is_none() || since_rebal >= bc.markowitz_rebalance {
                        let window = store.returns_window(
                            Phase::Evaluation,
                            store.dates()[trade_row - 1],
                            trade_row - bc.markowitz_window,
                            trade_row - 1,
                            "markowitz estimation",
                        )?;
                        let input =
                            MarkowitzInput::from_history(&window, bc.markowitz_r_min)?;
                        let weights = match markowitz_weights(&input) {
                            Ok(w) => w,
                            Err(Error::Infeasible(_)) => {
                                let best = input
                                    .mu()
                                    .iter()
                                    .cloned()
                                    .fold(f64::NEG_INFINITY, f64::max);
                                let relaxed = MarkowitzInput::from_history(&window, best)?;
                                markowitz_weights(&relaxed)?
                            }
                            Err(e) => return Err(e),
                        };
                        held = Some(weights);
                        since_rebal = 0;
                    }
                    since_rebal += 1;
                    if since_rebal == 1 {
                        Ok(held.clone().expect("weights set on rebalance"))
                    } else {
                        // Hold between rebalances: re-submitting the drifted
                        // holdings trades nothing and pays no cost.
                        ActionVector::new(state.holdings.clone())
                    }
                })?
            }
            4 => {
                let bc = &config.benchmarks;
                let mut held: Option<ActionVector> = None;
                let mut since_pick = 0usize;
                run_out_of_sample(&env, |slice_t, state| {
                    let trade_row = oos_from + slice_t;
                    if held.is_none() || since_pick >= bc.winner_refresh {
                        let window = store.returns_window(
                            Phase::Evaluation,
                            store.dates()[trade_row - 1],
                            trade_row - bc.winner_lookback,
                            trade_row - 1,
                            "winner lookback",
                        )?;
                        held = Some(winner_from_window(&window)?);
                        since_pick = 0;
                    }
                    since_pick += 1;
                    if since_pick == 1 {
                        Ok(held.clone().expect("winner set on refresh"))
                    } else {
                        ActionVector::new(state.holdings.clone())
                    }
                })?
            }
            _ => unreachable!(),
        };
        runs.push(run);
    }

    // Rank diagnostic: where did DRL1's top pick sit in that day's ordering
    // of volatility forecasts (1 = lowest estimate)?
    for (date, action) in runs[0].dates.iter().zip(&runs[0].actions) {
        let row = forecasts
            .index_of(*date)
            .ok_or_else(|| Error::Misaligned(format!("no forecast row for {date}")))?;
        let vols: Vec<f64> = (0..forecasts.n_cols())
            .map(|j| forecasts.values()[[row, j]])
            .collect();
        let top = argmax(action.weights());
        rank_counts[ascending_rank(&vols, top) - 1] += 1;
    }

    store.audit()?;
    let dates = runs[0].dates.clone();
    for run in &runs {
        if run.dates != dates {
            return Err(Error::Misaligned("model runs disagree on test dates".into()));
        }
    }
    let [drl1, drl2, average, markowitz, winner]: [OosRun; 5] =
        runs.try_into().map_err(|_| Error::Shape("expected 5 model runs".into()))?;
    let drl1_params = drl_params.swap_remove(0);
    Ok(SplitOutput {
        dates,
        returns: [
            drl1.returns,
            drl2.returns,
            average.returns,
            markowitz.returns,
            winner.returns,
        ],
        actions: [
            drl1.actions,
            drl2.actions,
            average.actions,
            markowitz.actions,
            winner.actions,
        ],
        rank_counts,
        access_log: store.access_log(),
        drl1_params,
        drl1_observations,
    })
}

/// Run every split in order on the calling thread.
fn run_splits_sequential(
    data: &WalkForwardData,
    config: &WalkForwardConfig,
    splits: &[WalkForwardSplit],
) -> Result<Vec<SplitOutput>> {
    splits.iter().enumerate().map(|(i, s)| run_split(data, config, s, i)).collect()
}

/// Fan the splits out over a pool of worker threads pulling from a shared
/// index counter, then collect the outputs back into split order. Each split
/// is self-contained, so the assembled outcome is identical to a sequential
/// run.
fn run_splits_threaded(
    data: &WalkForwardData,
    config: &WalkForwardConfig,
    splits: &[WalkForwardSplit],
    workers: usize,
) -> Result<Vec<SplitOutput>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<SplitOutput>>>> =
        splits.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= splits.len() {
                    break;
                }
                let out = run_split(data, config, &splits[i], i);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every split slot is filled"))
        .collect()
}

/// Train, evaluate, and stitch every test year: the two learned policies and
/// the three reference allocators, all sharing one audited data gate and one
/// cost model.
pub fn run_walk_forward(
    data: &WalkForwardData,
    config: &WalkForwardConfig,
) -> Result<WalkForwardOutcome> {
    run_walk_forward_threaded(data, config, 1)
}

/// [`run_walk_forward`] with split work spread over up to `threads` worker
/// threads. Output is bitwise identical to the sequential run for any thread
/// count.
pub fn run_walk_forward_threaded(
    data: &WalkForwardData,
    config: &WalkForwardConfig,
    threads: usize,
) -> Result<WalkForwardOutcome> {
    if threads == 0 {
        return Err(Error::Config("thread cap must be positive".into()));
    }
    validate_run(data, config)?;
    let splits = walk_forward_splits(
        data.returns.dates(),
        config.anchor_start,
        config.first_test_year,
        config.last_test_year,
    )?;

    let workers = threads.min(splits.len());
    let outputs = if workers <= 1 {
        run_splits_sequential(data, config, &splits)?
    } else {
        run_splits_threaded(data, config, &splits, workers)?
    };

    let n = config.forecast.models.len();
    let mut dates = Vec::new();
    let mut returns: [Vec<f64>; 5] = Default::default();
    let mut actions: Vec<Vec<f64>> = vec![Vec::new(); 5];
    let mut rank_counts = vec![0usize; n];
    let mut access_log = Vec::new();
    let mut last: Option<(PolicyParams, Vec<Observation>)> = None;

    for out in outputs {
        dates.extend_from_slice(&out.dates);
        for m in 0..5 {
            returns[m].extend_from_slice(&out.returns[m]);
            for a in &out.actions[m] {
                actions[m].extend_from_slice(a.weights());
            }
        }
        for (bin, c) in rank_counts.iter_mut().zip(&out.rank_counts) {
            *bin += c;
        }
        access_log.extend(out.access_log);
        last = Some((out.drl1_params, out.drl1_observations));
    }

    let (final_params, final_observations) =
        last.ok_or_else(|| Error::Config("no walk-forward splits produced output".into()))?;
    let strategy_names: Vec<String> =
        config.forecast.models.iter().map(|m| m.name().to_string()).collect();
    let n_days = dates.len();
    let models = MODEL_ORDER
        .iter()
        .zip(returns)
        .zip(actions)
        .map(|((name, rets), acts)| {
            let allocations = Array2::from_shape_vec((n_days, n), acts)
                .map_err(|e| Error::Shape(format!("allocation matrix: {e}")))?;
            Ok(ModelRun {
                name: (*name).to_string(),
                dates: dates.clone(),
                returns: rets,
                allocations,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(WalkForwardOutcome {
        splits,
        models,
        strategy_names,
        rank_counts,
        access_log,
        final_params,
        final_observations,
    })
}
