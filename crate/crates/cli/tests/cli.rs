//! End-to-end tests driving the compiled `vt-lab` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vt-lab"));
    cmd.env_remove("VT_LAB_THREADS");
    cmd
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "vt-lab {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_err(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        !out.status.success(),
        "vt-lab {args:?} unexpectedly succeeded:\n{}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stderr).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

fn first_column(path: &Path) -> Vec<String> {
    lines(path)
        .iter()
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect()
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 5\n[synthetic]\nn_days = 250\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    run_ok(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()]);
    run_ok(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap()]);
    run_ok(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "99",
    ]);

    for name in ["returns.csv", "context.csv", "implied.csv", "true_vol.csv"] {
        let xs = fs::read(a.join(name)).unwrap();
        assert_eq!(xs, fs::read(b.join(name)).unwrap(), "{name} changed between reruns");
        assert_ne!(xs, fs::read(c.join(name)).unwrap(), "{name} ignored the seed");
        assert_eq!(lines(&a.join(name)).len(), 251, "{name}: 250 days plus header");
    }
    assert_eq!(
        first_column(&a.join("returns.csv")),
        first_column(&a.join("context.csv")),
        "returns and context must share the date index"
    );
}

#[test]
fn forecast_writes_the_selected_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[synthetic]\nn_days = 320\n");
    let out = tmp.path().join("fc");
    run_ok(&["forecast", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let header = lines(&out.join("forecasts.csv"))[0].clone();
    assert_eq!(
        header,
        "date,moving_average,level_shift,garch,gjr_garch,heavy,har,adjusted_implied,pca_implied,ewma"
    );

    run_ok(&[
        "forecast",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--models",
        "har,moving_average,ewma",
    ]);
    let header = lines(&out.join("forecasts.csv"))[0].clone();
    assert_eq!(header, "date,har,moving_average,ewma", "subset keeps the given order");
}

#[test]
fn missing_implied_data_is_refused_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[synthetic]\nn_days = 300\nn_implied = 0\n");
    let out = tmp.path().join("never");
    let stderr = run_err(&["forecast", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(stderr.contains("implied"), "unexpected message: {stderr}");
    assert!(!out.exists(), "nothing may be written when validation fails");

    // Dropping the implied-index models clears the requirement.
    run_ok(&[
        "forecast",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--models",
        "moving_average,garch",
    ]);
    assert_eq!(lines(&out.join("forecasts.csv"))[0], "date,moving_average,garch");
}

fn walkforward_config(out_dir: &Path) -> String {
    format!(
        r#"
seed = 11
output_dir = "{}"

[synthetic]
n_days = 783
start_date = "2018-01-01"

[forecast]
models = ["moving_average", "ewma", "level_shift"]

[env]
window = 8

[network]
asset_conv = [{{ kernel = 3, channels = 2 }}]
context_conv = [{{ kernel = 3, channels = 2 }}]
merge = [6]

[train]
max_steps = 2000
early_stop_patience = 3

[walkforward]
anchor_start = "2018-01-01"
first_test_year = 2019
last_test_year = 2020

[benchmarks]
markowitz_window = 60
winner_lookback = 60

[sensitivity]
lookback = 10
stream_days = 60
"#,
        out_dir.display()
    )
}

const BUNDLE_FILES: [&str; 13] = [
    "metrics_1y.csv",
    "metrics_3y.csv",
    "metrics_5y.csv",
    "ttest.csv",
    "sensitivity.csv",
    "allocations.csv",
    "rank_histogram.csv",
    "performance.dat",
    "running_avg.dat",
    "rank_histogram.dat",
    "oos_returns.csv",
    "policy.bin",
    "audit.csv",
];

#[test]
fn walkforward_bundle_is_complete_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run_a = tmp.path().join("a");
    let cfg = write_config(tmp.path(), &walkforward_config(&run_a));
    run_ok(&[
        "walkforward",
        "--config",
        &cfg,
        "--models",
        "drl1,drl2,average,markowitz,winner",
    ]);
    for name in BUNDLE_FILES {
        assert!(run_a.join(name).exists(), "missing {name}");
    }
    let metrics = lines(&run_a.join("metrics_1y.csv"));
    let data: Vec<&String> = metrics.iter().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 6, "header plus five model rows");
    assert_eq!(data[0], "model,return,sharpe,sortino,mdd,mdd_over_vol");
    for (row, name) in data[1..].iter().zip(["DRL1", "DRL2", "Average", "Markowitz", "Winner"]) {
        assert!(row.starts_with(name), "row {row} out of order");
    }
    let audit = lines(&run_a.join("audit.csv"));
    assert!(audit.len() > 1);
    assert!(audit[1..].iter().all(|l| l.ends_with(",false")), "audit must be clean");

    // A second run through the threaded path reproduces every artifact.
    let run_b = tmp.path().join("b");
    let out = bin()
        .args(["walkforward", "--config", &cfg, "--out", run_b.to_str().unwrap()])
        .env("VT_LAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in BUNDLE_FILES {
        assert_eq!(
            fs::read(run_a.join(name)).unwrap(),
            fs::read(run_b.join(name)).unwrap(),
            "{name} differs between runs"
        );
    }

    // The report command rebuilds the derived tables from the artifacts.
    for name in ["metrics_1y.csv", "metrics_3y.csv", "metrics_5y.csv", "ttest.csv"] {
        fs::remove_file(run_a.join(name)).unwrap();
    }
    run_ok(&["report", "--config", &cfg]);
    for name in ["metrics_1y.csv", "metrics_3y.csv", "metrics_5y.csv", "ttest.csv"] {
        assert_eq!(
            fs::read(run_a.join(name)).unwrap(),
            fs::read(run_b.join(name)).unwrap(),
            "{name} not restored faithfully"
        );
    }

    // Without artifacts there is nothing to report.
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let stderr = run_err(&["report", "--config", &cfg, "--out", empty.to_str().unwrap()]);
    assert!(stderr.contains("missing artifact"), "unexpected message: {stderr}");
}

#[test]
fn train_then_sensitivity_reuses_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let cfg = write_config(tmp.path(), &walkforward_config(&run));

    let stderr = run_err(&["sensitivity", "--config", &cfg]);
    assert!(stderr.contains("checkpoint"), "unexpected message: {stderr}");

    let stdout = run_ok(&["train", "--config", &cfg]);
    assert!(stdout.contains("best reward"), "missing summary: {stdout}");
    assert!(run.join("policy.bin").exists());
    assert!(run.join("training_log.csv").exists());

    run_ok(&["sensitivity", "--config", &cfg]);
    let rows = lines(&run.join("sensitivity.csv"));
    let data: Vec<&String> = rows.iter().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "rank,feature,raw,score");
    let top: Vec<&str> = data[1].split(',').collect();
    assert_eq!(top[0], "1");
    assert_eq!(top[3].parse::<f64>().unwrap(), 100.0, "top feature scores 100");
    // 2 channels x 3 assets x 8 window + (1 signal + 2 nuisance + 3 derived) x 8.
    assert_eq!(data.len() - 1, 2 * 3 * 8 + 6 * 8);
}

#[test]
fn backtest_summarizes_each_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[synthetic]\nn_days = 400\n[forecast]\nmodels = [\"moving_average\", \"ewma\", \"garch\"]\n",
    );
    let out = tmp.path().join("bt");
    run_ok(&["backtest", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let summary = lines(&out.join("strategy_metrics.csv"));
    assert_eq!(summary.len(), 4, "header plus one row per strategy");
    assert_eq!(summary[0], "strategy,return,sharpe,sortino,mdd,mdd_over_vol");
    assert!(summary[1].starts_with("moving_average,"));

    let returns = lines(&out.join("strategy_returns.csv"));
    let prices = lines(&out.join("strategy_prices.csv"));
    assert_eq!(returns[0], "date,moving_average,ewma,garch");
    assert_eq!(returns.len(), prices.len());
    let base: Vec<&str> = returns[1].split(',').collect();
    assert!(base[1..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0), "base row is flat");
}

#[test]
fn config_typos_and_bad_thread_caps_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sed = 3\n");
    let stderr = run_err(&["simulate", "--config", &cfg]);
    assert!(stderr.contains("unknown field"), "unexpected message: {stderr}");

    let cfg = write_config(tmp.path(), "[synthetic]\nn_days = 100\n");
    for bad in ["0", "three"] {
        let out = bin()
            .args(["simulate", "--config", &cfg])
            .env("VT_LAB_THREADS", bad)
            .output()
            .unwrap();
        assert!(!out.status.success(), "VT_LAB_THREADS={bad} must be rejected");
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert!(stderr.contains("VT_LAB_THREADS"), "unexpected message: {stderr}");
    }

    let stderr = run_err(&[
        "walkforward",
        "--config",
        &cfg,
        "--models",
        "drl1,average",
    ]);
    assert!(stderr.contains("drl1, drl2, average, markowitz, winner"), "{stderr}");

    let stderr = run_err(&["simulate", "--config", &cfg, "--models", "moving_average"]);
    assert!(stderr.contains("--models"), "{stderr}");
}
