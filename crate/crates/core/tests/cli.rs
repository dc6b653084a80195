//! End-to-end runs of the `neural-hawkes` binary.

use std::path::Path;
use std::process::{Command, Output};

fn neural_hawkes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neural-hawkes")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = neural_hawkes(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn json(path: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr carries one JSON error")
}

#[test]
fn unknown_flag_exits_1_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = path(dir.path(), "events.csv");
    let out = neural_hawkes(&["simulate", "--preset", "benchmark", "--events", "100", "--bogus", "--out", &target]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "argument");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn missing_input_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = neural_hawkes(&["stats", "--events", &path(dir.path(), "absent.csv"), "--grid-preset", "benchmark", "--out", &path(dir.path(), "s.csv")]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn non_stationary_spec_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let spec = path(dir.path(), "spec.json");
    let explosive = serde_json::json!({
        "dimension": 1,
        "mark_cardinality": 1,
        "baseline": [0.5],
        "mark_pmfs": [[1.0]],
        "kernels": [[{ "family": "exponential", "alpha": 4.0, "beta": 2.0, "mark_factor": "constant" }]]
    });
    std::fs::write(&spec, explosive.to_string()).unwrap();
    let out = neural_hawkes(&["simulate", "--spec", &spec, "--events", "100", "--out", &path(dir.path(), "ev.csv")]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_json(&out)["error"]["kind"], "numerical");
    assert!(!dir.path().join("ev.csv").exists());
}

#[test]
fn help_lists_every_subcommand() {
    let out = neural_hawkes(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["simulate", "stats", "fit-neural", "fit-wh", "eval", "metrics", "ingest", "sweep", "convergence"] {
        assert!(text.contains(sub), "{sub} missing from --help");
    }
}

#[test]
fn simulate_stats_wiener_hopf_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--preset", "convergence-exponential", "--events", "30000", "--seed", "5", "--out", &path(d, "ev.csv")]);
    let events = std::fs::read_to_string(path(d, "ev.csv")).unwrap();
    assert!(events.lines().take(5).any(|l| l == "# seed=5"));
    assert!(events.lines().take(5).any(|l| l.starts_with("# config_hash=")));

    ok(&["stats", "--events", &path(d, "ev.csv"), "--grid-preset", "convergence-exponential", "--out", &path(d, "st.csv")]);
    let side = json(&path(d, "st.csv.json"));
    assert_eq!(side["dimension"], 2);
    assert_eq!(side["mark_cardinality"], 2);

    ok(&["fit-wh", "--stats", &path(d, "st.csv"), "--nodes", "60", "--out", &path(d, "wh.json")]);
    assert_eq!(json(&path(d, "wh.json"))["nodes"].as_array().unwrap().len(), 60);

    ok(&["metrics", "--fit", &path(d, "wh.json"), "--stats", &path(d, "st.csv"), "--preset", "convergence-exponential", "--volumes", "1,3", "--out", &path(d, "m.json")]);
    let m = json(&path(d, "m.json"));
    let nu: f64 = m["causality"]["participation"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((nu - 1.0).abs() < 1e-12);
    let err = m["errors"]["normalized_delta_2"].as_f64().unwrap();
    assert!(err.is_finite() && err < 0.5, "Wiener-Hopf error {err}");
    assert!(std::fs::read_to_string(path(d, "m.json.cells.csv")).unwrap().lines().count() > 4);
}

#[test]
fn config_hash_tracks_parameters_not_paths() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let hash = |name: &str, seed: &str| {
        ok(&["simulate", "--preset", "benchmark", "--events", "500", "--seed", seed, "--out", &path(d, name)]);
        std::fs::read_to_string(path(d, name)).unwrap().lines().find(|l| l.starts_with("# config_hash=")).unwrap().to_string()
    };
    assert_eq!(hash("a.csv", "1"), hash("b.csv", "1"));
    assert_ne!(hash("a.csv", "1"), hash("c.csv", "2"));
}

#[test]
fn trades_ingest_with_window_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "simulate", "--preset", "benchmark", "--events", "80000", "--seed", "6", "--trade-pairs", "BTC-USD,ETH-USD",
        "--out", &path(d, "trades.csv"),
    ]);
    ok(&[
        "ingest", "--trades", &path(d, "trades.csv"), "--pairs", "BTC-USD,ETH-USD", "--profile-minutes", "30",
        "--out", &path(d, "all.csv"),
    ]);
    ok(&[
        "ingest", "--trades", &path(d, "trades.csv"), "--pairs", "BTC-USD,ETH-USD", "--window", "07:00-12:00",
        "--out", &path(d, "window.csv"),
    ]);
    let all = json(&path(d, "all.csv.json"));
    let window = json(&path(d, "window.csv.json"));
    let ingested: u64 = all["summary"]["events"].as_array().unwrap().iter().map(|e| e.as_u64().unwrap()).sum();
    assert_eq!(all["window_events"].as_u64(), Some(ingested));
    let kept = window["window_events"].as_u64().unwrap();
    assert!(kept > 0 && kept < ingested);
    // Two full days of a five-hour window.
    assert_eq!(window["horizon"].as_f64(), Some(2.0 * 5.0 * 3600.0));
    let profile = std::fs::read_to_string(path(d, "all.csv.profile.csv")).unwrap();
    assert_eq!(profile.lines().filter(|l| !l.starts_with('#')).count(), 1 + 48);

    ok(&["stats", "--events", &path(d, "window.csv"), "--h", "0.1", "--n-lin", "10", "--n-log", "20", "--max-lag", "5", "--out", &path(d, "st.csv")]);
}

#[test]
fn sweep_writes_one_line_per_value_and_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--preset", "convergence-exponential", "--events", "20000", "--seed", "8", "--out", &path(d, "ev.csv")]);
    ok(&["stats", "--events", &path(d, "ev.csv"), "--grid-preset", "convergence-exponential", "--out", &path(d, "st.csv")]);
    ok(&[
        "sweep", "--stats", &path(d, "st.csv"), "--param", "neurons", "--values", "8,16", "--epochs", "20",
        "--quadrature-nodes", "20", "--training-size", "64", "--batch-size", "16", "--preset", "convergence-exponential",
        "--k", "100", "--out", &path(d, "sweep"),
    ]);
    let table = std::fs::read_to_string(d.join("sweep/sweep.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2);
}
