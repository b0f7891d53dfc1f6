use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::datagen::{simulate_lorenz96, simulate_var3, standardize, GroundTruthAdjacency, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::eval::{best_operating_point, roc_from_graphs, roc_from_score_matrix, roc_from_sweep, RocCurve, RocOptions};
use crate::infer::{extract_adjacency, fit_all_components, lambda_sweep, SweepOptions, ENCODER_STREAM};
use crate::ingest::{load_adjacency, load_matrix, load_series};
use crate::model::ModelKind;
use crate::numerics::child_seed;

use super::config::ExperimentConfig;

/// What a command reports back to the driver.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    /// Failed training jobs; nonzero maps to exit code 2.
    pub failures: usize,
    pub summary: String,
}

struct Loaded {
    ds: TimeSeriesDataset,
    raw: Option<TimeSeriesDataset>,
    truth: Option<GroundTruthAdjacency>,
    data_seed: Option<u64>,
    inputs: Vec<Value>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<Value> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(json!({"path": path.display().to_string(), "sha256": sha256_hex(&bytes)}))
}

fn load(cfg: &ExperimentConfig, want_truth: bool) -> Result<Loaded> {
    let block = &cfg.dataset;
    let generated = if let Some(l) = &block.lorenz96 {
        Some((simulate_lorenz96(l)?, l.seed))
    } else if let Some(v) = &block.var3 {
        Some((simulate_var3(v)?, v.seed))
    } else {
        None
    };
    if let Some(((raw, truth), seed)) = generated {
        let ds = if block.standardize { standardize(&raw)?.0 } else { raw.clone() };
        let inputs = vec![json!({"path": "generated:series.csv", "sha256": sha256_hex(raw.to_csv_string().as_bytes())})];
        return Ok(Loaded { ds, raw: Some(raw), truth: Some(truth), data_seed: Some(seed), inputs });
    }
    let manifest = block.file.as_ref().expect("validated: one source");
    let ds = load_series(manifest)?;
    let mut inputs = vec![hash_file(&manifest.series_path)?];
    let truth = if want_truth && cfg.eval.enabled {
        let path = cfg.truth_file().ok_or_else(|| {
            Error::Config(
                "eval.truth_path (or dataset.file.truth_path) is required when eval.enabled is true".into(),
            )
        })?;
        inputs.push(hash_file(path)?);
        Some(load_adjacency(path, ds.n(), manifest.transpose_truth)?)
    } else {
        None
    };
    Ok(Loaded { ds, raw: None, truth, data_seed: None, inputs })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write_json(path: PathBuf, value: &impl serde::Serialize) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn seeds_json(cfg: &ExperimentConfig, n: usize, data_seed: Option<u64>) -> Value {
    let run = cfg.run.seed;
    json!({
        "run": run,
        "data": data_seed,
        "components": (0..n as u64).map(|i| child_seed(run, i)).collect::<Vec<_>>(),
        "encoder": (cfg.model.kind == ModelKind::Esru).then(|| child_seed(run, ENCODER_STREAM)),
    })
}

/// Config echo for result files. Worker count and output directory do not
/// affect results, so they are left to the manifest and outputs stay
/// comparable across machines.
fn result_config(cfg: &ExperimentConfig) -> Result<Value> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(run) = v.get_mut("run").and_then(Value::as_object_mut) {
        run.remove("workers");
        run.remove("out_dir");
    }
    Ok(v)
}

fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, loaded: &Loaded, jobs: Value) -> Result<()> {
    write_json(
        dir.join("manifest.json"),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "seeds": seeds_json(cfg, loaded.ds.n(), loaded.data_seed),
            "inputs": loaded.inputs,
            "jobs": jobs,
        }),
    )
}

/// Writes `series.csv`, `truth.csv`, `dataset.json` and `manifest.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.dataset.file.is_some() {
        return Err(Error::Config("simulate needs dataset.lorenz96 or dataset.var3".into()));
    }
    let loaded = load(cfg, true)?;
    let out = &cfg.run.out_dir;
    create_dir(out)?;
    let raw = loaded.raw.as_ref().expect("generated");
    raw.write_csv(&out.join("series.csv"))?;
    loaded.truth.as_ref().expect("generated").write_csv(&out.join("truth.csv"))?;
    let (generator, config) = match (&cfg.dataset.lorenz96, &cfg.dataset.var3) {
        (Some(l), _) => ("lorenz96", serde_json::to_value(l)?),
        (_, Some(v)) => ("var3", serde_json::to_value(v)?),
        _ => unreachable!(),
    };
    write_json(
        out.join("dataset.json"),
        &json!({
            "generator": generator,
            "config": config,
            "seed": loaded.data_seed,
            "n": raw.n(),
            "samples": raw.total_samples(),
        }),
    )?;
    write_manifest(out, "simulate", cfg, &loaded, json!([]))?;
    Ok(Outcome {
        failures: 0,
        summary: format!("wrote {} samples of {} series to {}", raw.total_samples(), raw.n(), out.display()),
    })
}

/// Single-lambda fit: `fit_<i>.json`, `scores.csv`, `nnz_trace.csv`.
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let loaded = load(cfg, false)?;
    let out = &cfg.run.out_dir;
    create_dir(out)?;
    let results = fit_all_components(&loaded.ds, &cfg.model, &cfg.train, cfg.run.workers)?;
    let mut jobs = Vec::new();
    let mut fits = Vec::new();
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(fit) => {
                write_json(out.join(format!("fit_{i}.json")), &fit.to_document())?;
                jobs.push(json!({"component": i, "status": "ok", "final_mse": fit.final_mse()}));
                fits.push(fit);
            }
            Err(e) => jobs.push(json!({"component": i, "status": "failed", "message": e.to_string()})),
        }
    }
    let failures = results.len() - fits.len();
    let n = loaded.ds.n();

    let mut trace = String::from("epoch");
    for label in loaded.ds.labels() {
        write!(trace, ",{label}").unwrap();
    }
    trace.push('\n');
    for e in 0..cfg.train.epochs {
        write!(trace, "{}", e + 1).unwrap();
        for r in &results {
            match r {
                Ok(fit) => write!(trace, ",{}", fit.nnz_columns[e]).unwrap(),
                Err(_) => trace.push(','),
            }
        }
        trace.push('\n');
    }
    write(out.join("nnz_trace.csv"), &trace)?;

    let summary = if failures == 0 {
        let owned: Vec<_> = results.into_iter().map(|r| r.expect("no failures")).collect();
        let adj = extract_adjacency(&owned)?;
        write(out.join("scores.csv"), &adj.scores_csv())?;
        let edges = adj.binary().iter().filter(|&&b| b).count();
        format!("fitted {n} components; {edges} of {} pairs nonzero", n * n)
    } else {
        format!("{failures} of {n} components failed; scores.csv not written")
    };
    write_manifest(out, "fit", cfg, &loaded, Value::Array(jobs))?;
    Ok(Outcome { failures, summary })
}

/// Lambda sweep into `<out>/sweep/`, plus `roc.csv` and `metrics.json` when a
/// truth graph is available.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = cfg.sweep.resolve_grid()?;
    let loaded = load(cfg, true)?;
    let out = &cfg.run.out_dir;
    create_dir(out)?;
    let opts = SweepOptions { workers: cfg.run.workers, warm_start: cfg.sweep.warm_start };
    let sweep = lambda_sweep(&loaded.ds, &cfg.model, &cfg.train, &grid, opts)?;
    let echo = result_config(cfg)?;
    sweep.write_dir(&out.join("sweep"), echo.clone())?;

    let roc_opts = RocOptions { exclude_self: cfg.eval.exclude_self, anchors: cfg.eval.anchors };
    let mut metrics = json!({
        "auroc": null,
        "exclude_self": cfg.eval.exclude_self,
        "anchors": cfg.eval.anchors,
        "grid": grid,
        "completed_points": sweep.completed().count(),
        "failures": sweep.failures,
        "config": echo,
    });
    let mut summary = format!("swept {} lambda values", grid.len());
    if let (true, Some(truth)) = (cfg.eval.enabled, &loaded.truth) {
        if sweep.completed().next().is_some() {
            let roc = roc_from_sweep(&sweep, truth, roc_opts)?;
            roc.write_csv(&out.join("roc.csv"))?;
            metrics["auroc"] = json!(roc.auroc);
            metrics["roc_points"] = json!(roc.points.len());
            if let Some((k, c)) = best_operating_point(&sweep, truth, cfg.eval.exclude_self)? {
                metrics["operating_point"] = json!({"grid_index": k, "lambda1": grid[k], "confusion": c});
            }
            write!(summary, "; auroc {:.4}", roc.auroc).unwrap();
        }
    }
    write_json(out.join("metrics.json"), &metrics)?;
    let jobs: Vec<Value> = sweep
        .points
        .iter()
        .enumerate()
        .flat_map(|(k, p)| {
            p.mse.iter().enumerate().map(move |(i, m)| {
                json!({"grid_index": k, "component": i, "status": if m.is_some() { "ok" } else { "failed" }})
            })
        })
        .collect();
    write_manifest(out, "sweep", cfg, &loaded, Value::Array(jobs))?;
    if !sweep.failures.is_empty() {
        write!(summary, "; {} jobs failed", sweep.failures.len()).unwrap();
    }
    Ok(Outcome { failures: sweep.failures.len(), summary })
}

#[derive(Clone, Debug)]
pub struct EvalArgs {
    /// A score/adjacency CSV, or a sweep directory holding `sweep.json`.
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub exclude_self: bool,
    pub anchors: bool,
    pub transpose_truth: bool,
    pub out_dir: PathBuf,
}

fn sweep_graphs(dir: &Path) -> Result<Vec<Array2<bool>>> {
    let path = dir.join("sweep.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: Value = serde_json::from_str(&text)?;
    let completed = doc["completed"].as_array().ok_or_else(|| Error::Malformed {
        path: path.clone(),
        message: "missing \"completed\" list".into(),
    })?;
    let mut graphs = Vec::new();
    for (k, done) in completed.iter().enumerate() {
        if done.as_bool() == Some(true) {
            graphs.push(load_matrix(&dir.join(format!("adjacency_{k}.csv")))?.mapv(|v| v != 0.0));
        }
    }
    Ok(graphs)
}

/// Scores a prediction against a truth graph: a sweep directory yields the
/// sweep ROC, a single matrix the threshold ROC of its entries.
pub fn cmd_eval(args: &EvalArgs) -> Result<Outcome> {
    let (roc, source): (RocCurve, &str) = if args.pred.is_dir() {
        let graphs = sweep_graphs(&args.pred)?;
        let n = graphs.first().map_or(0, |g| g.nrows());
        let truth = load_adjacency(&args.truth, n, args.transpose_truth)?;
        let opts = RocOptions { exclude_self: args.exclude_self, anchors: args.anchors };
        (roc_from_graphs(&graphs, &truth, opts)?, "sweep")
    } else {
        let m = load_matrix(&args.pred)?;
        let truth = load_adjacency(&args.truth, m.nrows(), args.transpose_truth)?;
        (roc_from_score_matrix(m.view(), &truth, args.exclude_self)?, "scores")
    };
    create_dir(&args.out_dir)?;
    roc.write_csv(&args.out_dir.join("roc.csv"))?;
    write_json(
        args.out_dir.join("metrics.json"),
        &json!({
            "auroc": roc.auroc,
            "roc_points": roc.points.len(),
            "mode": source,
            "exclude_self": args.exclude_self,
            "pred": args.pred.display().to_string(),
            "truth": args.truth.display().to_string(),
            "inputs": [hash_input(&args.pred)?, hash_file(&args.truth)?],
        }),
    )?;
    Ok(Outcome { failures: 0, summary: format!("auroc {:.4}", roc.auroc) })
}

fn hash_input(path: &Path) -> Result<Value> {
    if path.is_dir() {
        hash_file(&path.join("sweep.json"))
    } else {
        hash_file(path)
    }
}
