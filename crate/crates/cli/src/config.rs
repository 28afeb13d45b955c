//! Run configuration: one TOML file drives every subcommand.
//!
//! Every section is optional and falls back to documented defaults, so an
//! empty file (or no `--config` at all) describes a complete synthetic run.
//! Unknown keys anywhere are hard errors; a typo must never silently fall
//! back to a default.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Datelike, NaiveDate};
use serde::Deserialize;
use vt_lab_core::evalkit::{BenchmarkConfig, WalkForwardConfig};
use vt_lab_core::market_data::{RegimeSpec, SyntheticMarketConfig};
use vt_lab_core::policy_net::{Activation, ConvSpec, NetworkArch};
use vt_lab_core::rl_env::{EnvConfig, DERIVED_CONTEXT_ROWS};
use vt_lab_core::train::TrainConfig;
use vt_lab_core::vol_forecast::{ForecastConfig, ModelKind};
use vt_lab_core::vol_target::TargetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

/// Where market data comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Return history (csv mode); first column dates, one named return column.
    pub returns_csv: Option<PathBuf>,
    /// Column of `returns_csv` holding the traded asset's returns.
    pub returns_column: String,
    /// Optional context panel aligned to the return dates (csv mode).
    pub context_csv: Option<PathBuf>,
    /// Optional implied-volatility panel aligned to the return dates (csv mode).
    pub implied_csv: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            returns_csv: None,
            returns_column: "bond".into(),
            context_csv: None,
            implied_csv: None,
        }
    }
}

/// One GARCH regime of the synthetic market. All five fields are required.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSection {
    pub persistence: f64,
    pub drift: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl From<&RegimeSection> for RegimeSpec {
    fn from(r: &RegimeSection) -> Self {
        RegimeSpec {
            persistence: r.persistence,
            drift: r.drift,
            omega: r.omega,
            alpha: r.alpha,
            beta: r.beta,
        }
    }
}

/// Synthetic market shape; used when `data.source = "synthetic"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_days: usize,
    pub regimes: Vec<RegimeSection>,
    pub context_noise: f64,
    pub n_nuisance: usize,
    pub n_implied: usize,
    pub implied_noise: f64,
    pub start_date: NaiveDate,
    /// Market seed; the global seed when unset.
    pub seed: Option<u64>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let base = SyntheticMarketConfig::single_regime_default(2520, 0);
        Self {
            n_days: base.n_days,
            regimes: base
                .regimes
                .iter()
                .map(|r| RegimeSection {
                    persistence: r.persistence,
                    drift: r.drift,
                    omega: r.omega,
                    alpha: r.alpha,
                    beta: r.beta,
                })
                .collect(),
            context_noise: base.context_noise,
            n_nuisance: base.n_nuisance,
            n_implied: base.n_implied,
            implied_noise: base.implied_noise,
            start_date: base.start_date,
            seed: None,
        }
    }
}

/// Volatility forecaster selection and per-model settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub models: Vec<ModelKind>,
    pub ma_window: usize,
    pub level_short: usize,
    pub level_long: usize,
    pub level_threshold: f64,
    pub ewma_lambda: f64,
    pub rm_window: usize,
    pub implied_lookback: usize,
    pub implied_column: Option<String>,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let base = ForecastConfig::default();
        Self {
            models: base.models,
            ma_window: base.ma_window,
            level_short: base.level_short,
            level_long: base.level_long,
            level_threshold: base.level_threshold,
            ewma_lambda: base.ewma_lambda,
            rm_window: base.rm_window,
            implied_lookback: base.implied_lookback,
            implied_column: base.implied_column,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub sigma_target_annual: f64,
    pub annualization_days: f64,
    pub leverage_cap: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        let base = TargetConfig::default();
        Self {
            sigma_target_annual: base.sigma_target_annual,
            annualization_days: base.annualization_days,
            leverage_cap: base.leverage_cap,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub cost_rate: f64,
    pub window: usize,
    pub gamma: f64,
    /// Mask volatility and context channels: the DRL2 ablation.
    pub returns_only: bool,
    pub explore_prob: f64,
    pub obs_noise_std: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let base = EnvConfig::default();
        Self {
            cost_rate: base.cost_rate,
            window: base.window,
            gamma: base.gamma,
            returns_only: base.returns_only,
            explore_prob: base.explore_prob,
            obs_noise_std: base.obs_noise_std,
        }
    }
}

/// Policy network shape. Asset count, context rows, and window length are
/// derived from the data and the environment, not configured here.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub asset_conv: Vec<ConvSpec>,
    pub context_conv: Vec<ConvSpec>,
    pub merge: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let base = NetworkArch::standard(1, 1);
        Self {
            asset_conv: base.asset_conv,
            context_conv: base.context_conv,
            merge: base.merge,
            activation: base.activation,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub max_steps: usize,
    pub early_stop_patience: usize,
    pub explore_p: f64,
    pub obs_noise_std: f64,
    pub lr: f64,
    /// Training seed; the global seed when unset.
    pub seed: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            max_steps: base.max_steps,
            early_stop_patience: base.early_stop_patience,
            explore_p: base.explore_p,
            obs_noise_std: base.obs_noise_std,
            lr: base.lr,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkForwardSection {
    pub anchor_start: NaiveDate,
    pub first_test_year: i32,
    pub last_test_year: i32,
}

impl Default for WalkForwardSection {
    fn default() -> Self {
        Self {
            anchor_start: NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(),
            first_test_year: 2017,
            last_test_year: 2019,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarksSection {
    pub markowitz_r_min: f64,
    pub markowitz_window: usize,
    pub markowitz_rebalance: usize,
    pub winner_lookback: usize,
    pub winner_refresh: usize,
}

impl Default for BenchmarksSection {
    fn default() -> Self {
        let base = BenchmarkConfig::default();
        Self {
            markowitz_r_min: base.markowitz_r_min,
            markowitz_window: base.markowitz_window,
            markowitz_rebalance: base.markowitz_rebalance,
            winner_lookback: base.winner_lookback,
            winner_refresh: base.winner_refresh,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    /// Trailing observations averaged into each replacement value.
    pub lookback: usize,
    /// Most recent decision points scored.
    pub stream_days: usize,
    /// Policy checkpoint to explain; `<output_dir>/policy.bin` when unset.
    pub checkpoint: Option<PathBuf>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self { lookback: 20, stream_days: 252, checkpoint: None }
    }
}

/// Everything a run needs, as parsed from the TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every stochastic component not given its own seed.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub forecast: ForecastSection,
    pub target: TargetSection,
    pub env: EnvSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub walkforward: WalkForwardSection,
    pub benchmarks: BenchmarksSection,
    pub sensitivity: SensitivitySection,
}

/// Parse the config file, or fall back to the built-in defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

/// Parse one forecaster name as spelled in config files and `--models`.
pub fn parse_model_kind(name: &str) -> Result<ModelKind> {
    ModelKind::ALL.iter().copied().find(|m| m.name() == name).ok_or_else(|| {
        let known: Vec<&str> = ModelKind::ALL.iter().map(|m| m.name()).collect();
        anyhow::anyhow!("unknown model '{name}'; expected one of {}", known.join(", "))
    })
}

impl RunConfig {
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn market_config(&self) -> SyntheticMarketConfig {
        let s = &self.synthetic;
        SyntheticMarketConfig {
            n_days: s.n_days,
            regimes: s.regimes.iter().map(RegimeSpec::from).collect(),
            context_noise: s.context_noise,
            n_nuisance: s.n_nuisance,
            n_implied: s.n_implied,
            implied_noise: s.implied_noise,
            start_date: s.start_date,
            seed: s.seed.unwrap_or(self.seed),
        }
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        let f = &self.forecast;
        ForecastConfig {
            models: f.models.clone(),
            ma_window: f.ma_window,
            level_short: f.level_short,
            level_long: f.level_long,
            level_threshold: f.level_threshold,
            ewma_lambda: f.ewma_lambda,
            rm_window: f.rm_window,
            implied_lookback: f.implied_lookback,
            implied_column: f.implied_column.clone(),
        }
    }

    pub fn target_config(&self) -> TargetConfig {
        TargetConfig {
            sigma_target_annual: self.target.sigma_target_annual,
            annualization_days: self.target.annualization_days,
            leverage_cap: self.target.leverage_cap,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        let e = &self.env;
        EnvConfig {
            cost_rate: e.cost_rate,
            window: e.window,
            gamma: e.gamma,
            returns_only: e.returns_only,
            explore_prob: e.explore_prob,
            obs_noise_std: e.obs_noise_std,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            max_steps: t.max_steps,
            early_stop_patience: t.early_stop_patience,
            explore_p: t.explore_p,
            obs_noise_std: t.obs_noise_std,
            lr: t.lr,
            seed: t.seed.unwrap_or(self.seed),
        }
    }

    /// Network shape for a given asset count and total context row count
    /// (user context plus derived rows), windowed like the environment.
    pub fn arch(&self, n_assets: usize, context_rows: usize) -> NetworkArch {
        let n = &self.network;
        NetworkArch {
            n_assets,
            context_rows,
            window: self.env.window,
            asset_conv: n.asset_conv.clone(),
            context_conv: n.context_conv.clone(),
            merge: n.merge.clone(),
            activation: n.activation,
        }
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        let b = &self.benchmarks;
        BenchmarkConfig {
            markowitz_r_min: b.markowitz_r_min,
            markowitz_window: b.markowitz_window,
            markowitz_rebalance: b.markowitz_rebalance,
            winner_lookback: b.winner_lookback,
            winner_refresh: b.winner_refresh,
        }
    }

    /// Assemble the full walk-forward run configuration. `context_cols` is
    /// the number of user context columns the data provides.
    pub fn walk_forward_config(&self, context_cols: usize) -> WalkForwardConfig {
        WalkForwardConfig {
            anchor_start: self.walkforward.anchor_start,
            first_test_year: self.walkforward.first_test_year,
            last_test_year: self.walkforward.last_test_year,
            forecast: self.forecast_config(),
            target: self.target_config(),
            env: self.env_config(),
            arch: self.arch(self.forecast.models.len(), context_cols + DERIVED_CONTEXT_ROWS),
            train: self.train_config(),
            benchmarks: self.benchmark_config(),
        }
    }

    /// Check every section before any command does work. Referenced paths
    /// must exist; section values must pass the same checks the library
    /// applies, so failures surface here rather than mid-run.
    pub fn validate(&self) -> Result<()> {
        match self.data.source {
            DataSource::Synthetic => {
                self.market_config().validate().context("[synthetic] section")?;
            }
            DataSource::Csv => {
                let path = self
                    .data
                    .returns_csv
                    .as_ref()
                    .context("[data] source = \"csv\" requires returns_csv")?;
                for (name, p) in [
                    ("returns_csv", Some(path)),
                    ("context_csv", self.data.context_csv.as_ref()),
                    ("implied_csv", self.data.implied_csv.as_ref()),
                ] {
                    if let Some(p) = p {
                        if !p.exists() {
                            bail!("[data] {name} {} does not exist", p.display());
                        }
                    }
                }
            }
        }
        if self.forecast.models.is_empty() {
            bail!("[forecast] models must not be empty");
        }
        for (i, m) in self.forecast.models.iter().enumerate() {
            if self.forecast.models[..i].contains(m) {
                bail!("[forecast] model '{}' listed twice", m.name());
            }
        }
        self.target_config().validate().context("[target] section")?;
        self.env_config().validate().context("[env] section")?;
        self.train_config().validate().context("[train] section")?;
        self.benchmark_config().validate().context("[benchmarks] section")?;
        self.arch(self.forecast.models.len().max(1), DERIVED_CONTEXT_ROWS)
            .validate()
            .context("[network] section")?;
        let wf = &self.walkforward;
        if wf.first_test_year > wf.last_test_year {
            bail!(
                "[walkforward] first_test_year {} is after last_test_year {}",
                wf.first_test_year,
                wf.last_test_year
            );
        }
        if wf.anchor_start.year() >= wf.first_test_year {
            bail!(
                "[walkforward] anchor_start {} must precede the first test year {}",
                wf.anchor_start,
                wf.first_test_year
            );
        }
        if self.sensitivity.lookback == 0 {
            bail!("[sensitivity] lookback must be positive");
        }
        if self.sensitivity.stream_days < self.sensitivity.lookback {
            bail!(
                "[sensitivity] stream_days {} is shorter than lookback {}",
                self.sensitivity.stream_days,
                self.sensitivity.lookback
            );
        }
        Ok(())
    }

    /// Whether the selected forecasters can actually be fed: implied-index
    /// models need an implied data source. Checked before anything is loaded
    /// or simulated.
    pub fn validate_forecast_inputs(&self) -> Result<()> {
        let wants_implied: Vec<&str> = self
            .forecast
            .models
            .iter()
            .filter(|m| m.needs_implied())
            .map(|m| m.name())
            .collect();
        if wants_implied.is_empty() {
            return Ok(());
        }
        let available = match self.data.source {
            DataSource::Synthetic => self.synthetic.n_implied > 0,
            DataSource::Csv => self.data.implied_csv.is_some(),
        };
        if !available {
            bail!(
                "models [{}] need implied-volatility data, but the config provides none",
                wants_implied.join(", ")
            );
        }
        Ok(())
    }
}
