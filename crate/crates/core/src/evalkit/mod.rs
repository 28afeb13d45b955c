//! Walk-forward evaluation kit: anchored year-by-year splits, performance
//! metrics, running-average significance tests, feature sensitivity, an
//! audited data gate, the end-to-end runner, and the report bundle writer.

mod datastore;
mod metrics;
mod report;
mod runner;
mod sensitivity;
mod splits;
mod ttest;

pub use datastore::{AccessRecord, DataStore, Phase};
pub use report::{
    render_sensitivity_table, write_comparison_tables, write_report_bundle, ReportPaths,
    HORIZON_YEARS,
};
pub use runner::{
    run_walk_forward, run_walk_forward_threaded, BenchmarkConfig, ModelRun, WalkForwardConfig,
    WalkForwardData, WalkForwardOutcome, MODEL_ORDER,
};
pub use metrics::{
    annualized_return_pct, max_drawdown_pct, metrics, metrics_from_returns, MetricsReport,
    TRADING_DAYS_PER_YEAR,
};
pub use sensitivity::{
    feature_sensitivity, FeatureScore, SensitivityReport, SENSITIVITY_LOOKBACK,
};
pub use splits::{walk_forward_splits, WalkForwardSplit};
pub use ttest::{running_average, ttest_running_avg_diff, TTestResult, SIGNIFICANCE_LEVEL};
