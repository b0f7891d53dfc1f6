//! Proximal gradient training of one component predictor.
//!
//! The objective is the mean squared one-step prediction error plus
//!
//! * `lambda1 * sum_j ||W_in(:, j)||_2` (input-column group lasso),
//! * `lambda2 * sum_{j,k} ||W_o(j, G_jk)||_2` (eSRU output groups),
//! * `ridge * ||theta||^2` over every other trainable tensor.
//!
//! Ridge terms are folded into the gradient step; the two group penalties
//! are handled exactly by group soft-thresholding, so input columns end up
//! either exactly zero or strictly nonzero.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::model::{backward, forward::run, Gradients, ModelKind, ModelParams, ModelSpec, ParamsDocument, Role};
use crate::numerics::{child_seed, l2_norm, shrink_unchecked, SeededRng};

/// Stream index of the segment-shuffling generator under a fit's seed.
pub const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub ridge: f64,
    pub step_size: f64,
    pub epochs: usize,
    /// Truncated-BPTT segment length; each segment restarts from a zero state.
    pub segment_length: usize,
    pub seed: u64,
    /// Replace the eSRU output-group penalty by ridge on `W_o`.
    pub ablation_ridge_wo: bool,
    /// Train the eSRU encoder (ridge-penalized) instead of keeping it fixed.
    pub ablation_train_dr: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ridge: 0.0,
            step_size: 0.01,
            epochs: 2000,
            segment_length: 125,
            seed: 0,
            ablation_ridge_wo: false,
            ablation_train_dr: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("ridge", self.ridge)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size must be positive, got {}", self.step_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.segment_length < 2 {
            return bad(format!("segment_length must be at least 2, got {}", self.segment_length));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Treatment {
    InputGroups,
    OutputGroups,
    Ridge,
    Frozen,
}

fn treatment(role: Role, kind: ModelKind, cfg: &TrainConfig) -> Treatment {
    match role {
        Role::InputWeights => Treatment::InputGroups,
        Role::OutputWeights if kind == ModelKind::Esru && !cfg.ablation_ridge_wo => Treatment::OutputGroups,
        Role::Encoder if !cfg.ablation_train_dr => Treatment::Frozen,
        _ => Treatment::Ridge,
    }
}

/// Penalized objective broken into its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub mse: f64,
    pub l1group_in: f64,
    pub l1group_out: f64,
    pub ridge: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.mse + self.l1group_in + self.l1group_out + self.ridge
    }
}

/// Penalty terms at `params` (the `mse` field is left at zero).
pub fn penalties(params: &ModelParams, cfg: &TrainConfig) -> LossParts {
    let mut parts = LossParts::default();
    parts.l1group_in = cfg.lambda1 * params.input_column_norms().iter().sum::<f64>();
    let groups = params.group_map();
    let md = params.state_dim();
    for (role, data) in params.tensors() {
        match treatment(role, params.kind, cfg) {
            Treatment::InputGroups | Treatment::Frozen => {}
            Treatment::OutputGroups => {
                let mut buf = vec![0.0; groups.m()];
                let mut sum = 0.0;
                for row in data.chunks_exact(md) {
                    for k in 0..groups.group_count() {
                        for (b, i) in buf.iter_mut().zip(groups.group(k)) {
                            *b = row[i];
                        }
                        sum += l2_norm(&buf);
                    }
                }
                parts.l1group_out = cfg.lambda2 * sum;
            }
            Treatment::Ridge => {
                parts.ridge += cfg.ridge * data.iter().map(|v| v * v).sum::<f64>();
            }
        }
    }
    parts
}

/// Residuals `prediction[s] - seq[s + 1, target]`.
fn residuals(predictions: &[f64], seq: ArrayView2<'_, f64>, target: usize) -> Vec<f64> {
    predictions
        .iter()
        .zip(seq.column(target).iter().skip(1))
        .map(|(p, x)| p - x)
        .collect()
}

/// Penalized loss over pre-cut segments; the squared error is averaged over
/// every predicted step of every segment.
pub fn penalized_loss(
    params: &ModelParams,
    segments: &[ArrayView2<'_, f64>],
    target: usize,
    cfg: &TrainConfig,
) -> Result<(f64, LossParts)> {
    let mut sse = 0.0;
    let mut count = 0usize;
    for seg in segments {
        let tr = run(params, *seg)?;
        sse += residuals(&tr.predictions, *seg, target).iter().map(|r| r * r).sum::<f64>();
        count += tr.steps;
    }
    let mut parts = penalties(params, cfg);
    parts.mse = if count > 0 { sse / count as f64 } else { 0.0 };
    Ok((parts.total(), parts))
}

/// One proximal gradient step, returning the updated parameters.
pub fn prox_step(params: &ModelParams, grads: &Gradients, cfg: &TrainConfig) -> Result<ModelParams> {
    let mut p = params.clone();
    apply_prox_step(&mut p, grads, cfg, 0)?;
    Ok(p)
}

/// In-place proximal step. `epoch` only labels errors.
pub fn apply_prox_step(
    params: &mut ModelParams,
    grads: &Gradients,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<()> {
    let eta = cfg.step_size;
    let kind = params.kind;
    let n = params.n_inputs();
    let md = params.state_dim();
    let groups = params.group_map();
    let grad_tensors = grads.tensors();
    let mut tensors = params.tensors_mut();
    if tensors.len() != grad_tensors.len() {
        return Err(Error::Shape("gradient layout differs from parameters".into()));
    }
    for ((role, theta), (grole, g)) in tensors.iter_mut().zip(&grad_tensors) {
        if role != grole || theta.len() != g.len() {
            return Err(Error::Shape(format!("gradient for {} has the wrong shape", role.name())));
        }
        match treatment(*role, kind, cfg) {
            Treatment::Frozen => {}
            Treatment::Ridge => {
                let decay = 2.0 * cfg.ridge;
                for (t, gi) in theta.iter_mut().zip(g.iter()) {
                    *t -= eta * (gi + decay * *t);
                }
            }
            Treatment::InputGroups => {
                for (t, gi) in theta.iter_mut().zip(g.iter()) {
                    *t -= eta * gi;
                }
                let tau = cfg.lambda1 * eta;
                let rows = theta.len() / n;
                let mut col = vec![0.0; rows];
                for j in 0..n {
                    for (r, c) in col.iter_mut().enumerate() {
                        *c = theta[r * n + j];
                    }
                    shrink_unchecked(&mut col, tau);
                    for (r, c) in col.iter().enumerate() {
                        theta[r * n + j] = *c;
                    }
                }
            }
            Treatment::OutputGroups => {
                for (t, gi) in theta.iter_mut().zip(g.iter()) {
                    *t -= eta * gi;
                }
                let tau = cfg.lambda2 * eta;
                let mut buf = vec![0.0; groups.m()];
                for row in theta.chunks_exact_mut(md) {
                    for k in 0..groups.group_count() {
                        for (b, i) in buf.iter_mut().zip(groups.group(k)) {
                            *b = row[i];
                        }
                        shrink_unchecked(&mut buf, tau);
                        for (b, i) in buf.iter().zip(groups.group(k)) {
                            row[i] = *b;
                        }
                    }
                }
            }
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteUpdate { epoch });
        }
    }
    Ok(())
}

/// Contiguous, non-overlapping segments of at most `segment_length` samples.
/// Each sequence is cut separately; a trailing remnant is kept when it has at
/// least two samples.
pub fn cut_segments(ds: &TimeSeriesDataset, segment_length: usize) -> Vec<ArrayView2<'_, f64>> {
    let mut out = Vec::new();
    for seq in ds.sequences() {
        let t = seq.nrows();
        let mut start = 0;
        while start < t {
            let end = (start + segment_length).min(t);
            if end - start >= 2 {
                out.push(seq.slice(ndarray::s![start..end, ..]));
            }
            start = end;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// Mean squared error over the epoch's segments, each measured just
    /// before its update.
    pub mse: f64,
    /// `mse` plus the penalties at the end-of-epoch parameters.
    pub penalized: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub target: usize,
    pub seed: u64,
    pub params: ModelParams,
    pub loss_trace: Vec<EpochLoss>,
    /// Nonzero `W_in` columns after each epoch.
    pub nnz_columns: Vec<usize>,
}

impl FitResult {
    pub fn final_mse(&self) -> f64 {
        self.loss_trace.last().map_or(f64::NAN, |l| l.mse)
    }

    pub fn to_document(&self) -> FitDocument {
        FitDocument {
            target: self.target,
            seed: self.seed,
            params: ParamsDocument::new(&self.params, Some(self.seed)),
            loss_mse: self.loss_trace.iter().map(|l| l.mse).collect(),
            loss_penalized: self.loss_trace.iter().map(|l| l.penalized).collect(),
            nnz_columns: self.nnz_columns.clone(),
        }
    }
}

/// JSON form of a [`FitResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDocument {
    pub target: usize,
    pub seed: u64,
    pub params: ParamsDocument,
    pub loss_mse: Vec<f64>,
    pub loss_penalized: Vec<f64>,
    pub nnz_columns: Vec<usize>,
}

impl FitDocument {
    pub fn into_fit(self) -> Result<FitResult> {
        if self.loss_mse.len() != self.loss_penalized.len() {
            return Err(Error::Shape("loss traces differ in length".into()));
        }
        Ok(FitResult {
            target: self.target,
            seed: self.seed,
            params: self.params.into_params()?,
            loss_trace: self
                .loss_mse
                .iter()
                .zip(&self.loss_penalized)
                .map(|(&mse, &penalized)| EpochLoss { mse, penalized })
                .collect(),
            nnz_columns: self.nnz_columns,
        })
    }
}

/// Initializes a predictor from `cfg.seed` and trains it on `target`.
///
/// An eSRU uses `encoder` when given, otherwise samples its own.
pub fn train_component(
    ds: &TimeSeriesDataset,
    target: usize,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    encoder: Option<&Array2<f64>>,
) -> Result<FitResult> {
    let mut rng = SeededRng::new(cfg.seed);
    let params = ModelParams::init(spec, ds.n(), &mut rng, encoder)?;
    train_from(params, ds, target, cfg)
}

/// Trains starting from `params`. Segment order is reshuffled every epoch
/// from a generator derived from `cfg.seed`.
pub fn train_from(
    mut params: ModelParams,
    ds: &TimeSeriesDataset,
    target: usize,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    params.validate()?;
    if target >= ds.n() {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {} components",
            ds.n()
        )));
    }
    if params.n_inputs() != ds.n() {
        return Err(Error::Shape(format!(
            "model has {} inputs, dataset has {} components",
            params.n_inputs(),
            ds.n()
        )));
    }
    let segments = cut_segments(ds, cfg.segment_length);
    if segments.is_empty() {
        return Err(Error::InvalidArgument("dataset yields no training segments".into()));
    }
    let mut shuffle = SeededRng::new(child_seed(cfg.seed, SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..segments.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut nnz_columns = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut sse = 0.0;
        let mut count = 0usize;
        for &k in &order {
            let seg = segments[k];
            let tr = run(&params, seg)?;
            let res = residuals(&tr.predictions, seg, target);
            sse += res.iter().map(|r| r * r).sum::<f64>();
            count += res.len();
            let grads = backward(&params, &tr, &res, cfg.ablation_train_dr)?;
            apply_prox_step(&mut params, &grads, cfg, epoch)?;
        }
        let mse = sse / count as f64;
        if !mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let penalized = mse + {
            let p = penalties(&params, cfg);
            p.l1group_in + p.l1group_out + p.ridge
        };
        loss_trace.push(EpochLoss { mse, penalized });
        nnz_columns.push(params.input_column_norms().iter().filter(|&&v| v > 0.0).count());
    }
    Ok(FitResult {
        target,
        seed: cfg.seed,
        params,
        loss_trace,
        nnz_columns,
    })
}
