//! End-to-end runs of the `ultm` binary on small simulated data.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const QUICK: [&str; 6] = ["--chains", "2", "--warmup", "100", "--draws", "100"];

fn ultm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultm")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, setting: &str, n: &str) {
    let out = ultm(&["simulate", "--setting", setting, "--n", n, "--n-test", "8", "--seed", "3", "--output", path(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(p).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn oracle_evaluation_has_zero_rimse_and_fixed_schema() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["one", "two"] {
        let out = ultm(&["evaluate", "--oracle", "--setting", "a1", "--seed", "5", "--output", path(&dir.path().join(run))]);
        assert!(out.status.success());
    }
    let read = |run: &str| -> Value {
        serde_json::from_str(&fs::read_to_string(dir.path().join(run).join("metrics.json")).unwrap()).unwrap()
    };
    let (a, b) = (read("one"), read("two"));
    assert_eq!(a, b, "seeded replication reproduces the metrics");
    assert_eq!(a["predictor"], "oracle");
    assert_eq!(a["metrics"]["rimse"].as_f64(), Some(0.0));
    for key in ["n_test", "rimse", "mae", "baseline_mae", "coverage", "c_index", "ibs", "point_level", "clipped"] {
        assert!(a["metrics"].get(key).is_some(), "missing {key}");
    }
    for key in ["setting", "seed", "n", "n_test", "predictor", "metrics"] {
        assert!(a.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn simulate_writes_inputs_and_truth_grid() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "b2", "40");
    let train = fs::read_to_string(dir.path().join("train.csv")).unwrap();
    assert!(train.starts_with("y,status,z1,z2,z3\n"));
    assert_eq!(csv_rows(&dir.path().join("train.csv")).len(), 40);
    let grid = csv_rows(&dir.path().join("truth_grid.csv"));
    assert_eq!(grid.len(), 8 * 200);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("simulation.json")).unwrap()).unwrap();
    assert_eq!(report["setting"], "b2");
}

#[test]
fn unknown_setting_and_bad_values_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ultm(&["simulate", "--setting", "d9", "--output", path(dir.path())]).status.code(), Some(2));
    assert_eq!(ultm(&["simulate", "--level", "1.5", "--output", path(dir.path())]).status.code(), Some(2));
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "zeta = 0.5\nnot_a_key = 1\n").unwrap();
    let out = ultm(&["--config", path(&cfg), "simulate", "--output", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));
}

#[test]
fn missing_response_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "x,z1\n1,2\n3,4\n").unwrap();
    let out = ultm(&["fit", "--input", path(&input), "--output", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"y\""));
}

#[test]
fn fit_predict_diagnose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "a1", "60");
    let fit_dir = dir.path().join("fit");
    let train = sim.join("train.csv");
    let mut args = vec!["fit", "--input", path(&train), "--output", path(&fit_dir)];
    args.extend(QUICK);
    let out = ultm(&args);
    assert!(matches!(out.status.code(), Some(0 | 4)), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["draws.csv", "model.json", "diagnostics.json", "beta_projection.json", "report.json"] {
        assert!(fit_dir.join(f).exists(), "missing {f}");
    }

    // identical config and seed give an identical draws file
    let again = dir.path().join("again");
    let train = sim.join("train.csv");
    let mut args = vec!["fit", "--input", path(&train), "--output", path(&again)];
    args.extend(QUICK);
    ultm(&args);
    assert_eq!(fs::read(fit_dir.join("draws.csv")).unwrap(), fs::read(again.join("draws.csv")).unwrap());

    let diag: Value = serde_json::from_str(&fs::read_to_string(fit_dir.join("diagnostics.json")).unwrap()).unwrap();
    let names: Vec<&str> = diag["scalars"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names[0], "lp");
    assert!(names.contains(&"H_s1") && names.contains(&"beta_3"));
    for s in diag["scalars"].as_array().unwrap() {
        for key in ["rhat", "ess", "W"] {
            assert!(s.get(key).is_some());
        }
    }

    // predicting on the training covariates gives monotone CDFs
    let pred = dir.path().join("pred");
    let out = ultm(&[
        "predict",
        "--model-dir",
        path(&fit_dir),
        "--covariates",
        path(&sim.join("train.csv")),
        "--output",
        path(&pred),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curves = csv_rows(&pred.join("ppd_curves.csv"));
    assert_eq!(curves.len(), 60 * 200);
    for rows in curves.chunks(200) {
        let cdf: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
    }
    let summary = csv_rows(&pred.join("predictions.csv"));
    assert_eq!(summary.len(), 60);
    for r in &summary {
        let (p, lo, hi): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!(lo <= p && p <= hi);
    }

    // diagnose recomputes the same numbers from the draws file
    let diag_dir = dir.path().join("diag");
    let out = ultm(&["diagnose", "--model-dir", path(&fit_dir), "--output", path(&diag_dir)]);
    assert!(out.status.success());
    let re: Value = serde_json::from_str(&fs::read_to_string(diag_dir.join("diagnostics.json")).unwrap()).unwrap();
    for (a, b) in diag["scalars"].as_array().unwrap().iter().zip(re["scalars"].as_array().unwrap()) {
        assert_eq!(a["name"], b["name"]);
        let (x, y) = (a["rhat"].as_f64().unwrap(), b["rhat"].as_f64().unwrap());
        assert!((x - y).abs() < 1e-9, "{}: {x} vs {y}", a["name"]);
    }
}

#[test]
fn predict_rejects_mismatched_draws() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "a1", "50");
    let fit_dir = dir.path().join("fit");
    let train = sim.join("train.csv");
    let mut args = vec!["fit", "--input", path(&train), "--output", path(&fit_dir)];
    args.extend(QUICK);
    ultm(&args);
    // a model file for a different truncation level
    let text = fs::read_to_string(fit_dir.join("model.json")).unwrap();
    let mut model: Value = serde_json::from_str(&text).unwrap();
    model["hyperparams"]["truncation"] = 6.into();
    fs::write(fit_dir.join("model.json"), serde_json::to_string(&model).unwrap()).unwrap();
    let out = ultm(&[
        "predict",
        "--model-dir",
        path(&fit_dir),
        "--covariates",
        path(&sim.join("test.csv")),
        "--output",
        path(&dir.path().join("pred")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn censored_fit_and_survival_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "b1", "80");
    let fit_dir = dir.path().join("fit");
    let train = sim.join("train.csv");
    let mut args = vec!["fit", "--domain", "positive", "--input", path(&train), "--output", path(&fit_dir)];
    args.extend(QUICK);
    let out = ultm(&args);
    assert!(matches!(out.status.code(), Some(0 | 4)), "{}", String::from_utf8_lossy(&out.stderr));
    let model: Value = serde_json::from_str(&fs::read_to_string(fit_dir.join("model.json")).unwrap()).unwrap();
    let rate = model["censoring_rate"].as_f64().unwrap();
    assert!(rate > 0.0);

    let pred = dir.path().join("pred");
    let out = ultm(&[
        "predict",
        "--model-dir",
        path(&fit_dir),
        "--covariates",
        path(&sim.join("test.csv")),
        "--output",
        path(&pred),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains(&format!("point level {:.16e}", rate)));
    let curves = csv_rows(&pred.join("ppd_curves.csv"));
    for rows in curves.chunks(200) {
        let s: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
        assert!(s[0] <= 1.0 && s[199] >= 0.0);
    }
}

#[test]
fn tune_from_a_sufficient_start_runs_one_round() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "a2", "60");
    let tune_dir = dir.path().join("tune");
    let train = sim.join("train.csv");
    let mut args = vec!["tune", "--zeta", "0.5", "--input", path(&train), "--output", path(&tune_dir)];
    args.extend(QUICK);
    let out = ultm(&args);
    assert!(matches!(out.status.code(), Some(0 | 4)), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(tune_dir.join("tuning_report.json")).unwrap()).unwrap();
    assert_eq!(report["rounds"].as_array().unwrap().len(), 1);
    assert_eq!(report["failed"], false);
    assert!(tune_dir.join("draws.csv").exists());

    let rows = csv_rows(&tune_dir.join("tuning_curve.csv"));
    let threshold: Vec<f64> = rows.iter().filter(|r| r[0] == "threshold").map(|r| r[2].parse().unwrap()).collect();
    assert!(threshold.len() > 10);
    assert!(threshold.windows(2).all(|w| w[1] < w[0]), "curve decreases in zeta");
    assert!(rows.iter().any(|r| r[0] == "within_variance"));
}

#[test]
fn scaled_responses_fit_and_predict_in_original_units() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "c1", "60");
    let train = sim.join("train.csv");
    let fit_dir = dir.path().join("fit");
    assert_eq!(
        ultm(&["fit", "--response-scale", "0", "--input", path(&train), "--output", path(&fit_dir)]).status.code(),
        Some(2)
    );
    let mut args = vec![
        "fit", "--response-scale", "10", "--expansion", "bspline", "--input", path(&train), "--output", path(&fit_dir),
    ];
    args.extend(QUICK);
    let out = ultm(&args);
    assert!(matches!(out.status.code(), Some(0 | 4)), "{}", String::from_utf8_lossy(&out.stderr));
    let model: Value = serde_json::from_str(&fs::read_to_string(fit_dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["response_scale"].as_f64(), Some(10.0));
    let (lo, hi) = (model["response_range"][0].as_f64().unwrap(), model["response_range"][1].as_f64().unwrap());

    let pred = dir.path().join("pred");
    let out = ultm(&[
        "predict",
        "--model-dir",
        path(&fit_dir),
        "--covariates",
        path(&sim.join("test.csv")),
        "--output",
        path(&pred),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curves = csv_rows(&pred.join("ppd_curves.csv"));
    let grid: Vec<f64> = curves[..200].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(grid[0] <= lo && grid[199] >= hi, "grid stays in response units");
    let medians: Vec<f64> = csv_rows(&pred.join("predictions.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(medians.iter().any(|m| m.abs() > 2.0), "medians are not left on the scaled axis");
}
