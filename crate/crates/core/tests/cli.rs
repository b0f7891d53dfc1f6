use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srugc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn toy_config(out: &Path) -> Value {
    json!({
        "dataset": {"lorenz96": {"n": 5, "samples": 60, "seed": 4}},
        "model": {
            "kind": "esru", "d_phi": 4, "d_r": 3, "d_o": 4, "encoder_dim": 3,
            "stage2_layers": 1, "stage2_width": 3, "scales": [0.0, 0.1, 0.9]
        },
        "train": {"lambda1": 0.05, "lambda2": 0.01, "ridge": 0.001, "step_size": 0.01, "epochs": 15, "segment_length": 20},
        "sweep": {"range": [0.01, 1.0], "count": 4},
        "run": {"seed": 2, "workers": 1, "out_dir": out}
    })
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn simulate_lorenz_writes_series_and_circulant_truth() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let o = run(&["simulate", "--preset", "lorenz_f40_esru", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_ok(&o);
    let series = read(&out.join("series.csv"));
    let lines: Vec<&str> = series.lines().collect();
    assert_eq!(lines.len(), 501);
    assert!(lines.iter().all(|l| l.split(',').count() == 10));
    let truth = read(&out.join("truth.csv"));
    let rows: Vec<Vec<&str>> = truth.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 10);
    for i in 0..10 {
        for j in 0..10 {
            assert_eq!(rows[i][j], rows[0][(j + 10 - i) % 10], "not circulant at ({i},{j})");
        }
    }
    let meta = json_file(&out.join("dataset.json"));
    assert_eq!(meta["seed"], 1);
    assert_eq!(meta["generator"], "lorenz96");
    let manifest = json_file(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seeds"]["run"], 1);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_var_has_thirty_edges_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        assert_ok(&run(&["simulate", "--preset", "var_esru", "--seed", "1", "--out", out.to_str().unwrap()]));
    }
    let truth = read(&a.join("truth.csv"));
    let edges = truth.lines().flat_map(|l| l.split(',')).filter(|v| *v == "1").count();
    assert_eq!(edges, 30);
    assert_eq!(read(&a.join("series.csv")).lines().count(), 1001);
    for f in ["series.csv", "truth.csv", "dataset.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
}

#[test]
fn fit_writes_one_file_per_component_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let cfg = write_config(tmp.path(), "fit.json", &toy_config(out));
        assert_ok(&run(&["fit", "--config", cfg.to_str().unwrap()]));
    }
    for i in 0..5 {
        assert!(a.join(format!("fit_{i}.json")).is_file());
    }
    assert!(!a.join("fit_5.json").exists());
    assert_eq!(read(&a.join("scores.csv")), read(&b.join("scores.csv")));
    assert_eq!(read(&a.join("nnz_trace.csv")).lines().count(), 16);
}

#[test]
fn unpenalized_fit_scores_are_all_positive() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = toy_config(&out);
    cfg["train"]["lambda1"] = json!(0.0);
    let path = write_config(tmp.path(), "fit.json", &cfg);
    assert_ok(&run(&["fit", "--config", path.to_str().unwrap()]));
    let scores = read(&out.join("scores.csv"));
    let values: Vec<f64> = scores.lines().flat_map(|l| l.split(',')).map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 25);
    assert!(values.iter().all(|&v| v > 0.0));
}

#[test]
fn sweep_writes_roc_and_metrics() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "sweep.json", &toy_config(&out));
    assert_ok(&run(&["sweep", "--config", cfg.to_str().unwrap()]));
    for k in 0..4 {
        assert!(out.join(format!("sweep/adjacency_{k}.csv")).is_file());
        assert!(out.join(format!("sweep/scores_{k}.csv")).is_file());
    }
    let metrics = json_file(&out.join("metrics.json"));
    let auroc = metrics["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auroc));
    assert!(read(&out.join("roc.csv")).starts_with("fpr,tpr\n"));
    let manifest = json_file(&out.join("manifest.json"));
    assert_eq!(manifest["jobs"].as_array().unwrap().len(), 20);
    assert_eq!(manifest["seeds"]["components"].as_array().unwrap().len(), 5);
    assert!(manifest["seeds"]["encoder"].is_u64());
}

#[test]
fn single_point_sweep_gives_three_point_roc() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = toy_config(&out);
    cfg["sweep"] = json!({"grid": [0.05]});
    let path = write_config(tmp.path(), "sweep.json", &cfg);
    assert_ok(&run(&["sweep", "--config", path.to_str().unwrap()]));
    assert!(out.join("sweep/adjacency_0.csv").is_file());
    assert!(!out.join("sweep/adjacency_1.csv").exists());
    let roc = read(&out.join("roc.csv"));
    let points = roc.lines().count() - 1;
    assert!((2..=3).contains(&points), "{roc}");
}

#[test]
fn diverging_jobs_give_partial_exit_code() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = toy_config(&out);
    cfg["train"]["step_size"] = json!(1e6);
    let path = write_config(tmp.path(), "sweep.json", &cfg);
    let o = run(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = json_file(&out.join("metrics.json"));
    assert!(!metrics["failures"].as_array().unwrap().is_empty());
}

#[test]
fn file_dataset_without_truth_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let mut cfg = toy_config(&sim);
    let path = write_config(tmp.path(), "sim.json", &cfg);
    assert_ok(&run(&["simulate", "--config", path.to_str().unwrap()]));

    cfg["dataset"] = json!({"file": {"series_path": sim.join("series.csv")}});
    cfg["run"]["out_dir"] = json!(tmp.path().join("out"));
    let path = write_config(tmp.path(), "sweep.json", &cfg);
    let o = run(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eval.truth_path"));

    cfg["eval"] = json!({"truth_path": sim.join("truth.csv")});
    let path = write_config(tmp.path(), "sweep.json", &cfg);
    assert_ok(&run(&["sweep", "--config", path.to_str().unwrap()]));
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let path = write_config(tmp.path(), "sim.json", &toy_config(&sim));
    assert_ok(&run(&["simulate", "--config", path.to_str().unwrap()]));
    let truth = sim.join("truth.csv");
    let out = tmp.path().join("eval");
    let o = run(&["eval", "--pred", truth.to_str().unwrap(), "--truth", truth.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_ok(&o);
    assert_eq!(json_file(&out.join("metrics.json"))["auroc"], 1.0);
}

#[test]
fn eval_exclude_self_ignores_the_diagonal() {
    let tmp = TempDir::new().unwrap();
    let truth = tmp.path().join("truth.csv");
    std::fs::write(&truth, "0,1,0\n0,0,1\n1,0,0\n").unwrap();
    // Perfect off the diagonal, maximal scores on it.
    let pred = tmp.path().join("pred.csv");
    std::fs::write(&pred, "9,0.8,0.1\n0.2,9,0.7\n0.9,0.3,9\n").unwrap();
    let out = tmp.path().join("eval");
    let args = ["eval", "--pred", pred.to_str().unwrap(), "--truth", truth.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_ok(&run(&args));
    assert!(json_file(&out.join("metrics.json"))["auroc"].as_f64().unwrap() < 1.0);
    let mut masked = args.to_vec();
    masked.push("--exclude-self");
    assert_ok(&run(&masked));
    assert_eq!(json_file(&out.join("metrics.json"))["auroc"], 1.0);
}

#[test]
fn eval_of_a_sweep_directory_matches_the_sweep() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let path = write_config(tmp.path(), "sweep.json", &toy_config(&out));
    assert_ok(&run(&["sweep", "--config", path.to_str().unwrap()]));
    let sim = tmp.path().join("sim");
    assert_ok(&run(&["simulate", "--config", path.to_str().unwrap(), "--out", sim.to_str().unwrap()]));
    let eval = tmp.path().join("eval");
    let sweep_dir = out.join("sweep");
    let truth = sim.join("truth.csv");
    assert_ok(&run(&["eval", "--pred", sweep_dir.to_str().unwrap(), "--truth", truth.to_str().unwrap(), "--out", eval.to_str().unwrap()]));
    assert_eq!(json_file(&eval.join("metrics.json"))["auroc"], json_file(&out.join("metrics.json"))["auroc"]);
    assert_eq!(read(&eval.join("roc.csv")), read(&out.join("roc.csv")));
}

#[test]
fn malformed_csv_reports_location() {
    let tmp = TempDir::new().unwrap();
    let truth = tmp.path().join("truth.csv");
    std::fs::write(&truth, "0,1\n1,0\n").unwrap();
    let pred = tmp.path().join("pred.csv");
    std::fs::write(&pred, "0.1,0.2\n0.3,abc\n").unwrap();
    let o = run(&["eval", "--pred", pred.to_str().unwrap(), "--truth", truth.to_str().unwrap(), "--out", tmp.path().join("e").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}

#[test]
fn unknown_config_keys_and_presets_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = toy_config(&tmp.path().join("out"));
    cfg["train"]["learning_rate"] = json!(0.1);
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let o = run(&["fit", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
    assert_eq!(run(&["fit", "--preset", "no_such_preset"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn presets_are_listed() {
    let o = run(&["presets"]);
    assert_ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["lorenz_f10_esru", "lorenz_f40_esru", "var_esru", "netsim_esru", "dream3_esru", "dream3_sru"] {
        assert!(text.lines().any(|l| l == name), "{name}");
    }
}
