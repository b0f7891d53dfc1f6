//! Network inference: one predictor per component, adjacency read off the
//! input-weight column norms, and regularization sweeps.
//!
//! Component `i` is trained with seed `child_seed(run_seed, i)`; an eSRU
//! encoder is drawn once from `child_seed(run_seed, ENCODER_STREAM)` and
//! shared by every component. Jobs never share mutable state, so results do
//! not depend on the number of workers.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{format_real, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelParams, ModelSpec};
use crate::numerics::{child_seed, SeededRng};
use crate::optim::{train_from, FitResult, TrainConfig};

pub const ENCODER_STREAM: u64 = 0x454E_434F;

/// `scores[(i, j)] = ||W_in^(i)(:, j)||_2`; series `j` is inferred to cause
/// series `i` exactly when the score is nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyScores {
    scores: Array2<f64>,
}

impl AdjacencyScores {
    pub fn new(scores: Array2<f64>) -> Result<Self> {
        if scores.nrows() != scores.ncols() {
            return Err(Error::Shape(format!("{}x{} score matrix", scores.nrows(), scores.ncols())));
        }
        if scores.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("scores must be finite and nonnegative".into()));
        }
        Ok(AdjacencyScores { scores })
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn binary(&self) -> Array2<bool> {
        self.scores.mapv(|v| v > 0.0)
    }

    pub fn scores_csv(&self) -> String {
        matrix_csv(self.scores.rows().into_iter().map(|r| r.iter().map(|&v| format_real(v)).collect()))
    }

    pub fn binary_csv(&self) -> String {
        matrix_csv(
            self.scores
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|&v| u8::from(v > 0.0).to_string()).collect()),
        )
    }
}

fn matrix_csv(rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Row `i` holds the column norms of fit `i`'s input weights.
pub fn extract_adjacency(fits: &[FitResult]) -> Result<AdjacencyScores> {
    let n = fits.len();
    let mut scores = Array2::zeros((n, n));
    for (i, fit) in fits.iter().enumerate() {
        let norms = fit.params.input_column_norms();
        if norms.len() != n {
            return Err(Error::Shape(format!("fit {i} has {} inputs, expected {n}", norms.len())));
        }
        scores.row_mut(i).assign(&ndarray::Array1::from(norms));
    }
    AdjacencyScores::new(scores)
}

/// Starting point of one component's training.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentInit {
    pub seed: u64,
    pub params: ModelParams,
}

/// Seeds and initial parameters for all `n` components under `run_seed`.
pub fn initial_components(n: usize, spec: &ModelSpec, run_seed: u64) -> Result<Vec<ComponentInit>> {
    spec.validate()?;
    let encoder = match spec.kind {
        ModelKind::Esru => Some(spec.sample_encoder(&mut SeededRng::new(child_seed(run_seed, ENCODER_STREAM)))?),
        ModelKind::Sru => None,
    };
    (0..n)
        .map(|i| {
            let seed = child_seed(run_seed, i as u64);
            let params = ModelParams::init(spec, n, &mut SeededRng::new(seed), encoder.as_ref())?;
            Ok(ComponentInit { seed, params })
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn wrap(component: usize, e: Error) -> Error {
    Error::Component { component, source: Box::new(e) }
}

/// Trains component `i` from `inits[i]`; the fit seed replaces `cfg.seed`.
pub fn fit_components(
    ds: &TimeSeriesDataset,
    inits: &[ComponentInit],
    cfg: &TrainConfig,
    workers: usize,
) -> Result<Vec<Result<FitResult>>> {
    if inits.len() != ds.n() {
        return Err(Error::Shape(format!("{} initial models for {} components", inits.len(), ds.n())));
    }
    Ok(pool(workers)?.install(|| {
        inits
            .par_iter()
            .enumerate()
            .map(|(i, init)| {
                let cfg = TrainConfig { seed: init.seed, ..cfg.clone() };
                train_from(init.params.clone(), ds, i, &cfg).map_err(|e| wrap(i, e))
            })
            .collect()
    }))
}

/// Fits every component with `cfg.seed` as the run seed. Failures are
/// reported per component; the others are still returned.
pub fn fit_all_components(
    ds: &TimeSeriesDataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<Vec<Result<FitResult>>> {
    let inits = initial_components(ds.n(), spec, cfg.seed)?;
    fit_components(ds, &inits, cfg, workers)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 || (count > 1 && hi == lo) {
        return Err(Error::InvalidArgument(format!(
            "log grid needs 0 < lo < hi and count >= 1, got [{lo}, {hi}] x {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|k| match k {
            0 => lo,
            k if k == count - 1 => hi,
            k => (a + (b - a) * k as f64 / last).exp(),
        })
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("lambda grid values must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("lambda grid must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub workers: usize,
    /// Start each grid point from the previous point's fit.
    pub warm_start: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobFailure {
    pub grid_index: usize,
    pub component: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub lambda1: f64,
    /// `None` when any component failed at this point.
    pub adjacency: Option<AdjacencyScores>,
    pub mse: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
    pub failures: Vec<JobFailure>,
}

impl SweepResult {
    pub fn completed(&self) -> impl Iterator<Item = (usize, &AdjacencyScores)> {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.adjacency.as_ref().map(|a| (k, a)))
    }

    /// Writes `sweep.json`, `adjacency_<k>.csv` and `scores_<k>.csv`.
    /// `config` is echoed into `sweep.json`.
    pub fn write_dir(&self, dir: &Path, config: serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let doc = serde_json::json!({
            "grid": self.grid,
            "seeds": self.seeds,
            "mse": self.points.iter().map(|p| &p.mse).collect::<Vec<_>>(),
            "completed": self.points.iter().map(|p| p.adjacency.is_some()).collect::<Vec<_>>(),
            "failures": self.failures,
            "config": config,
        });
        let path = dir.join("sweep.json");
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        for (k, adj) in self.completed() {
            let path = dir.join(format!("adjacency_{k}.csv"));
            std::fs::write(&path, adj.binary_csv()).map_err(|e| Error::io(&path, e))?;
            let path = dir.join(format!("scores_{k}.csv"));
            std::fs::write(&path, adj.scores_csv()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Runs one all-component fit per `lambda1` in `grid`; `base.seed` is the run
/// seed and every point starts from the same initialization unless
/// `warm_start` is set. Failed jobs are recorded and the sweep continues.
pub fn lambda_sweep(
    ds: &TimeSeriesDataset,
    spec: &ModelSpec,
    base: &TrainConfig,
    grid: &[f64],
    opts: SweepOptions,
) -> Result<SweepResult> {
    check_grid(grid)?;
    base.validate()?;
    let n = ds.n();
    let inits = initial_components(n, spec, base.seed)?;
    let cfg_for = |k: usize, i: usize| TrainConfig {
        lambda1: grid[k],
        seed: inits[i].seed,
        ..base.clone()
    };
    let workers = pool(opts.workers)?;

    // results[k][i]
    let results: Vec<Vec<Result<FitResult>>> = if opts.warm_start {
        let per_component: Vec<Vec<Result<FitResult>>> = workers.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut out = Vec::with_capacity(grid.len());
                    let mut params = Some(inits[i].params.clone());
                    for k in 0..grid.len() {
                        let r = match params.take() {
                            Some(p) => train_from(p, ds, i, &cfg_for(k, i)).map_err(|e| wrap(i, e)),
                            None => Err(wrap(i, Error::InvalidArgument("previous grid point failed".into()))),
                        };
                        if let Ok(fit) = &r {
                            params = Some(fit.params.clone());
                        }
                        out.push(r);
                    }
                    out
                })
                .collect()
        });
        let mut by_point: Vec<Vec<Result<FitResult>>> = (0..grid.len()).map(|_| Vec::with_capacity(n)).collect();
        for column in per_component {
            for (k, r) in column.into_iter().enumerate() {
                by_point[k].push(r);
            }
        }
        by_point
    } else {
        let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|k| (0..n).map(move |i| (k, i))).collect();
        let flat: Vec<Result<FitResult>> = workers.install(|| {
            jobs.par_iter()
                .map(|&(k, i)| train_from(inits[i].params.clone(), ds, i, &cfg_for(k, i)).map_err(|e| wrap(i, e)))
                .collect()
        });
        let mut it = flat.into_iter();
        (0..grid.len()).map(|_| it.by_ref().take(n).collect()).collect()
    };

    let mut points = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for (k, fits) in results.into_iter().enumerate() {
        let mut ok = Vec::with_capacity(n);
        let mut mse = Vec::with_capacity(n);
        for (i, r) in fits.into_iter().enumerate() {
            match r {
                Ok(fit) => {
                    mse.push(Some(fit.final_mse()));
                    ok.push(fit);
                }
                Err(e) => {
                    mse.push(None);
                    failures.push(JobFailure { grid_index: k, component: i, message: e.to_string() });
                }
            }
        }
        let adjacency = if ok.len() == n { Some(extract_adjacency(&ok)?) } else { None };
        points.push(SweepPoint { lambda1: grid[k], adjacency, mse });
    }
    Ok(SweepResult {
        grid: grid.to_vec(),
        seeds: inits.iter().map(|c| c.seed).collect(),
        points,
        failures,
    })
}
