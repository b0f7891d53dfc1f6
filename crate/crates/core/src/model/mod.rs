//! SRU and economy-SRU (eSRU) component predictors.
//!
//! Both cells share one recurrence. At step `t`, with `u_0 = 0`:
//!
//! ```text
//! r_t   = feedback(u_{t-1})
//! phi_t = h(W_in x_t + W_f r_t + b_in)
//! u_t^a = (1 - a) u_{t-1}^a + a phi_t          for every scale a
//! o_t   = h(W_o u_t + b_o)
//! xhat_{t+1} = w_y . o_t + b_y
//! ```
//!
//! The SRU feedback is a single dense layer on `u_{t-1}`. The eSRU feedback
//! first sketches `u_{t-1}` with a fixed Gaussian encoder `D_r` and then
//! applies a small stack of dense layers.

mod backward;
mod document;
pub(crate) mod forward;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_gaussian_matrix, Activation, SeededRng};

pub use backward::{backward, Gradients};
pub use document::{MatrixDoc, ParamsDocument};
pub use forward::{forward, ForwardTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sru,
    Esru,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Sru => write!(f, "sru"),
            ModelKind::Esru => write!(f, "esru"),
        }
    }
}

/// Ordered EWMA decay scales, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleSet {
    alphas: Vec<f64>,
}

impl ScaleSet {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidArgument("scale set must be nonempty".into()));
        }
        if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument(format!("scales must lie in [0, 1]: {alphas:?}")));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "scales must be strictly increasing: {alphas:?}"
            )));
        }
        Ok(ScaleSet { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ScaleSet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScaleSet::new(v)
    }
}

impl From<ScaleSet> for Vec<f64> {
    fn from(s: ScaleSet) -> Vec<f64> {
        s.alphas
    }
}

/// Index sets tying output-weight entries to recurrent statistics.
///
/// The summary state is laid out scale-major, `u = [u^{a_1}; ...; u^{a_m}]`,
/// so statistic `k` at scale `l` sits at `k + l * d_phi`. Group `(j, k)` is
/// that set of `m` positions in row `j` of `W_o`; the groups of any row
/// partition `0..m * d_phi`. Indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupIndexMap {
    d_phi: usize,
    m: usize,
}

impl GroupIndexMap {
    pub fn new(d_phi: usize, m: usize) -> Result<Self> {
        if d_phi == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "group map needs d_phi, m >= 1, got d_phi={d_phi}, m={m}"
            )));
        }
        Ok(GroupIndexMap { d_phi, m })
    }

    pub fn d_phi(&self) -> usize {
        self.d_phi
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn group_count(&self) -> usize {
        self.d_phi
    }

    /// Column indices of group `k` within any row (the row does not matter).
    pub fn group(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let d = self.d_phi;
        (0..self.m).map(move |l| k + l * d)
    }
}

/// Shorthand for [`GroupIndexMap::new`].
pub fn build_group_index_map(d_phi: usize, m: usize) -> Result<GroupIndexMap> {
    GroupIndexMap::new(d_phi, m)
}

/// Dense layer `h(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Layer {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn uniform(out: usize, inp: usize, rng: &mut SeededRng) -> Self {
        Layer {
            weight: uniform_fan_in(out, inp, rng),
            bias: Array1::zeros(out),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Feedback path from `u_{t-1}` to `r_t`.
///
/// SRU: no encoder, one layer (`W_r`, `b_r`). eSRU: fixed encoder `D_r`
/// followed by the stage-2 layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedback {
    pub encoder: Option<Array2<f64>>,
    pub layers: Vec<Layer>,
}

impl Feedback {
    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }
}

/// Architecture and hyperparameters of one component predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Width of the recurrent statistic `phi`.
    pub d_phi: usize,
    /// Width of the feedback `r`.
    pub d_r: usize,
    /// Width of the output features `o`.
    pub d_o: usize,
    /// Encoder output width `d_r'` (eSRU only).
    pub encoder_dim: usize,
    /// Stage-2 feedback layer count (eSRU only).
    pub stage2_layers: usize,
    /// Hidden width of the stage-2 stack (eSRU only).
    pub stage2_width: usize,
    pub scales: ScaleSet,
    pub activation: Activation,
    /// When set, `phi_t` consumes the feedback computed one step earlier.
    pub feedback_lag: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Esru,
            d_phi: 10,
            d_r: 10,
            d_o: 10,
            encoder_dim: 10,
            stage2_layers: 2,
            stage2_width: 10,
            scales: ScaleSet::new(vec![0.0, 0.01, 0.1, 0.99]).unwrap(),
            activation: Activation::ELU,
            feedback_lag: false,
        }
    }
}

impl ModelSpec {
    pub fn m(&self) -> usize {
        self.scales.len()
    }

    pub fn state_dim(&self) -> usize {
        self.m() * self.d_phi
    }

    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        if self.d_phi == 0 || self.d_r == 0 || self.d_o == 0 {
            return Err(Error::InvalidArgument("layer widths must be at least 1".into()));
        }
        if self.kind == ModelKind::Esru {
            if self.encoder_dim == 0 || self.stage2_layers == 0 || self.stage2_width == 0 {
                return Err(Error::InvalidArgument(
                    "eSRU needs encoder_dim, stage2_layers and stage2_width >= 1".into(),
                ));
            }
            if self.encoder_dim >= self.state_dim() {
                return Err(Error::InvalidArgument(format!(
                    "eSRU encoder width {} must be below m * d_phi = {}",
                    self.encoder_dim,
                    self.state_dim()
                )));
            }
        }
        Ok(())
    }

    /// `(out, in)` shapes of the trainable feedback layers.
    fn feedback_shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            ModelKind::Sru => vec![(self.d_r, self.state_dim())],
            ModelKind::Esru => {
                let l = self.stage2_layers;
                (0..l)
                    .map(|i| {
                        let inp = if i == 0 { self.encoder_dim } else { self.stage2_width };
                        let out = if i + 1 == l { self.d_r } else { self.stage2_width };
                        (out, inp)
                    })
                    .collect()
            }
        }
    }

    /// Fixed eSRU encoder with i.i.d. `N(0, 1/d_r')` entries.
    pub fn sample_encoder(&self, rng: &mut SeededRng) -> Result<Array2<f64>> {
        sample_gaussian_matrix(
            self.encoder_dim,
            self.state_dim(),
            1.0 / self.encoder_dim as f64,
            rng,
        )
    }
}

fn uniform_fan_in(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

/// Full parameter set of one component predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub w_in: Array2<f64>,
    pub w_f: Array2<f64>,
    pub b_in: Array1<f64>,
    pub feedback: Feedback,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub w_y: Array1<f64>,
    pub b_y: f64,
    pub scales: ScaleSet,
    pub activation: Activation,
    pub feedback_lag: bool,
}

/// Named view of one parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    InputWeights,
    FeedbackMix,
    InputBias,
    Encoder,
    FeedbackWeight(usize),
    FeedbackBias(usize),
    OutputWeights,
    OutputBias,
    ReadoutWeights,
    ReadoutBias,
}

impl Role {
    pub fn name(&self) -> String {
        match self {
            Role::InputWeights => "w_in".into(),
            Role::FeedbackMix => "w_f".into(),
            Role::InputBias => "b_in".into(),
            Role::Encoder => "d_r".into(),
            Role::FeedbackWeight(l) => format!("feedback_{l}.weight"),
            Role::FeedbackBias(l) => format!("feedback_{l}.bias"),
            Role::OutputWeights => "w_o".into(),
            Role::OutputBias => "b_o".into(),
            Role::ReadoutWeights => "w_y".into(),
            Role::ReadoutBias => "b_y".into(),
        }
    }
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

impl ModelParams {
    /// Fan-in uniform weights, zero biases. Draw order: `W_in`, `W_f`,
    /// feedback layers, `W_o`, `w_y`. An eSRU without a supplied encoder
    /// samples one afterwards from the same stream.
    pub fn init(
        spec: &ModelSpec,
        n: usize,
        rng: &mut SeededRng,
        encoder: Option<&Array2<f64>>,
    ) -> Result<Self> {
        spec.validate()?;
        if n == 0 {
            return Err(Error::InvalidArgument("model needs at least one input".into()));
        }
        let w_in = uniform_fan_in(spec.d_phi, n, rng);
        let w_f = uniform_fan_in(spec.d_phi, spec.d_r, rng);
        let layers: Vec<Layer> = spec
            .feedback_shapes()
            .into_iter()
            .map(|(o, i)| Layer::uniform(o, i, rng))
            .collect();
        let w_o = uniform_fan_in(spec.d_o, spec.state_dim(), rng);
        let w_y = uniform_fan_in(1, spec.d_o, rng).into_shape_with_order(spec.d_o).unwrap();
        let encoder = match spec.kind {
            ModelKind::Sru => None,
            ModelKind::Esru => Some(match encoder {
                Some(d) => {
                    if d.dim() != (spec.encoder_dim, spec.state_dim()) {
                        return Err(Error::Shape(format!(
                            "encoder is {:?}, expected {:?}",
                            d.dim(),
                            (spec.encoder_dim, spec.state_dim())
                        )));
                    }
                    d.as_standard_layout().into_owned()
                }
                None => spec.sample_encoder(rng)?,
            }),
        };
        Ok(ModelParams {
            kind: spec.kind,
            w_in,
            w_f,
            b_in: Array1::zeros(spec.d_phi),
            feedback: Feedback { encoder, layers },
            w_o,
            b_o: Array1::zeros(spec.d_o),
            w_y,
            b_y: 0.0,
            scales: spec.scales.clone(),
            activation: spec.activation,
            feedback_lag: spec.feedback_lag,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn d_phi(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn d_o(&self) -> usize {
        self.w_o.nrows()
    }

    pub fn m(&self) -> usize {
        self.scales.len()
    }

    pub fn state_dim(&self) -> usize {
        self.m() * self.d_phi()
    }

    pub fn group_map(&self) -> GroupIndexMap {
        GroupIndexMap::new(self.d_phi(), self.m()).expect("validated dimensions")
    }

    /// Checks that every dimension agrees and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let d_phi = self.d_phi();
        let sd = self.state_dim();
        let mut problems = Vec::new();
        if self.w_f.nrows() != d_phi {
            problems.push(format!("w_f has {} rows, expected {d_phi}", self.w_f.nrows()));
        }
        if self.b_in.len() != d_phi {
            problems.push("b_in length".to_string());
        }
        if self.feedback.layers.is_empty() {
            problems.push("feedback has no layers".to_string());
        }
        let mut inp = match &self.feedback.encoder {
            Some(d) => {
                if d.ncols() != sd {
                    problems.push(format!("encoder has {} columns, expected {sd}", d.ncols()));
                }
                d.nrows()
            }
            None => sd,
        };
        for (l, layer) in self.feedback.layers.iter().enumerate() {
            if layer.in_dim() != inp || layer.bias.len() != layer.out_dim() {
                problems.push(format!("feedback layer {l} has inconsistent shape"));
            }
            inp = layer.out_dim();
        }
        if self.w_f.ncols() != inp {
            problems.push(format!("w_f has {} columns, feedback emits {inp}", self.w_f.ncols()));
        }
        if self.w_o.ncols() != sd {
            problems.push(format!("w_o has {} columns, expected {sd}", self.w_o.ncols()));
        }
        if self.b_o.len() != self.d_o() || self.w_y.len() != self.d_o() {
            problems.push("output bias / readout length".to_string());
        }
        if (self.kind == ModelKind::Esru) != self.feedback.encoder.is_some() {
            problems.push("only eSRU models carry an encoder".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Shape(problems.join("; ")));
        }
        for (role, data) in self.tensors() {
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{} has non-finite entries", role.name())));
            }
        }
        Ok(())
    }

    /// All-zero parameters with the same shapes (scales and activation kept).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, data) in z.tensors_mut() {
            data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Every tensor, including the encoder, in a fixed order.
    pub fn tensors(&self) -> Vec<(Role, &[f64])> {
        let mut out: Vec<(Role, &[f64])> = vec![
            (Role::InputWeights, slice(&self.w_in)),
            (Role::FeedbackMix, slice(&self.w_f)),
            (Role::InputBias, slice(&self.b_in)),
        ];
        if let Some(d) = &self.feedback.encoder {
            out.push((Role::Encoder, slice(d)));
        }
        for (l, layer) in self.feedback.layers.iter().enumerate() {
            out.push((Role::FeedbackWeight(l), slice(&layer.weight)));
            out.push((Role::FeedbackBias(l), slice(&layer.bias)));
        }
        out.push((Role::OutputWeights, slice(&self.w_o)));
        out.push((Role::OutputBias, slice(&self.b_o)));
        out.push((Role::ReadoutWeights, slice(&self.w_y)));
        out.push((Role::ReadoutBias, std::slice::from_ref(&self.b_y)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(Role, &mut [f64])> {
        let mut out: Vec<(Role, &mut [f64])> = vec![
            (Role::InputWeights, slice_mut(&mut self.w_in)),
            (Role::FeedbackMix, slice_mut(&mut self.w_f)),
            (Role::InputBias, slice_mut(&mut self.b_in)),
        ];
        if let Some(d) = &mut self.feedback.encoder {
            out.push((Role::Encoder, slice_mut(d)));
        }
        for (l, layer) in self.feedback.layers.iter_mut().enumerate() {
            out.push((Role::FeedbackWeight(l), slice_mut(&mut layer.weight)));
            out.push((Role::FeedbackBias(l), slice_mut(&mut layer.bias)));
        }
        out.push((Role::OutputWeights, slice_mut(&mut self.w_o)));
        out.push((Role::OutputBias, slice_mut(&mut self.b_o)));
        out.push((Role::ReadoutWeights, slice_mut(&mut self.w_y)));
        out.push((Role::ReadoutBias, std::slice::from_mut(&mut self.b_y)));
        out
    }

    /// Euclidean norms of the columns of `W_in`.
    pub fn input_column_norms(&self) -> Vec<f64> {
        self.w_in
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Copy whose input columns are reordered: new column `k` is old column `perm[k]`.
    pub fn permute_inputs(&self, perm: &[usize]) -> Result<Self> {
        crate::datagen::check_permutation(perm, self.n_inputs())?;
        let mut p = self.clone();
        p.w_in = Array2::from_shape_fn(self.w_in.dim(), |(r, k)| self.w_in[[r, perm[k]]]);
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_group_layout() {
        let g = build_group_index_map(5, 3).unwrap();
        assert_eq!(g.group(0).collect::<Vec<_>>(), vec![0, 5, 10]);
        assert_eq!(g.group(2).collect::<Vec<_>>(), vec![2, 7, 12]);
    }

    #[test]
    fn single_scale_groups_are_singletons() {
        let g = build_group_index_map(4, 1).unwrap();
        for k in 0..4 {
            assert_eq!(g.group(k).collect::<Vec<_>>(), vec![k]);
        }
    }

    #[test]
    fn groups_partition_the_row() {
        for (d, m) in [(1, 1), (5, 3), (10, 4), (3, 7)] {
            let g = build_group_index_map(d, m).unwrap();
            let mut all: Vec<usize> = (0..g.group_count()).flat_map(|k| g.group(k).collect::<Vec<_>>()).collect();
            assert_eq!(all.len(), d * m);
            all.sort_unstable();
            all.dedup();
            assert_eq!(all, (0..d * m).collect::<Vec<_>>());
        }
        assert!(build_group_index_map(0, 2).is_err());
    }

    #[test]
    fn scale_set_validation() {
        assert!(ScaleSet::new(vec![0.0, 0.01, 0.1, 0.99]).is_ok());
        assert!(ScaleSet::new(vec![]).is_err());
        assert!(ScaleSet::new(vec![0.5, 0.5]).is_err());
        assert!(ScaleSet::new(vec![0.2, 0.1]).is_err());
        assert!(ScaleSet::new(vec![1.5]).is_err());
    }

    #[test]
    fn init_shapes_and_bounds() {
        let spec = ModelSpec::default();
        let p = ModelParams::init(&spec, 7, &mut SeededRng::new(1), None).unwrap();
        p.validate().unwrap();
        assert_eq!(p.w_in.dim(), (10, 7));
        assert_eq!(p.feedback.encoder.as_ref().unwrap().dim(), (10, 40));
        assert_eq!(p.feedback.layers.len(), 2);
        assert_eq!(p.feedback.layers[0].weight.dim(), (10, 10));
        let bound = 1.0 / 7f64.sqrt();
        assert!(p.w_in.iter().all(|v| v.abs() <= bound));
        assert!(p.b_in.iter().all(|&v| v == 0.0));

        let sru = ModelSpec { kind: ModelKind::Sru, ..ModelSpec::default() };
        let p = ModelParams::init(&sru, 7, &mut SeededRng::new(1), None).unwrap();
        p.validate().unwrap();
        assert!(p.feedback.encoder.is_none());
        assert_eq!(p.feedback.layers[0].weight.dim(), (10, 40));
    }

    #[test]
    fn esru_rejects_wide_encoder() {
        let spec = ModelSpec { encoder_dim: 40, ..ModelSpec::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn supplied_encoder_is_used() {
        let spec = ModelSpec::default();
        let d = spec.sample_encoder(&mut SeededRng::new(99)).unwrap();
        let a = ModelParams::init(&spec, 3, &mut SeededRng::new(1), Some(&d)).unwrap();
        let b = ModelParams::init(&spec, 3, &mut SeededRng::new(2), Some(&d)).unwrap();
        assert_eq!(a.feedback.encoder, b.feedback.encoder);
        assert_ne!(a.w_in, b.w_in);
    }
}
