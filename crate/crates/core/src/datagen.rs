//! Benchmark generators with known ground-truth causal graphs.
//!
//! Two systems are provided: the cyclic Lorenz-96 ODE (nonlinear couplings,
//! each variable driven by its neighbours at offsets -2..=+1) and a jointly
//! sparse, stable VAR(3) process.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// One or more ordered sequences of `n`-dimensional measurements.
///
/// Each sequence is a `T_s x n` matrix: rows are time steps, columns are
/// components.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    sequences: Vec<Array2<f64>>,
    labels: Vec<String>,
}

impl TimeSeriesDataset {
    pub fn new(sequences: Vec<Array2<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        let first = sequences
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset has no sequences".into()))?;
        let n = first.ncols();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset has zero components".into()));
        }
        for (s, seq) in sequences.iter().enumerate() {
            if seq.ncols() != n {
                return Err(Error::Shape(format!(
                    "sequence {s} has {} components, expected {n}",
                    seq.ncols()
                )));
            }
            if seq.nrows() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "sequence {s} has {} samples; at least 2 are required",
                    seq.nrows()
                )));
            }
            if let Some(((t, j), _)) = seq.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "sequence {s} has a non-finite value at time {t}, component {j}"
                )));
            }
        }
        let labels = match labels {
            Some(l) if l.len() != n => {
                return Err(Error::Shape(format!("{} labels for {n} components", l.len())))
            }
            Some(l) => l,
            None => default_labels(n),
        };
        Ok(TimeSeriesDataset { sequences, labels })
    }

    pub fn single(series: Array2<f64>) -> Result<Self> {
        Self::new(vec![series], None)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sequences(&self) -> &[Array2<f64>] {
        &self.sequences
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total_samples(&self) -> usize {
        self.sequences.iter().map(|s| s.nrows()).sum()
    }

    /// Dataset whose component `k` is component `perm[k]` of `self`.
    pub fn permute_components(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let sequences = self
            .sequences
            .iter()
            .map(|s| s.select(Axis(1), perm))
            .collect();
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        Self::new(sequences, Some(labels))
    }

    /// CSV text: a header of labels, one row per time step, 17 significant
    /// digits. Multi-sequence datasets get a leading `sequence_id` column.
    pub fn to_csv_string(&self) -> String {
        let multi = self.sequences.len() > 1;
        let mut out = String::new();
        if multi {
            out.push_str("sequence_id,");
        }
        out.push_str(&self.labels.join(","));
        out.push('\n');
        for (s, seq) in self.sequences.iter().enumerate() {
            for row in seq.rows() {
                if multi {
                    write!(out, "{s},").unwrap();
                }
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    out.push_str(&format_real(*v));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("x{j}")).collect()
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::Shape(format!("permutation of length {} for {n} components", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Formats a real with 17 significant digits; parses back bit-exactly.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Binary causal graph. Entry `(i, j) = 1` means series `j` Granger-causes
/// series `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthAdjacency {
    edges: Array2<u8>,
}

impl GroundTruthAdjacency {
    pub fn new(edges: Array2<u8>) -> Result<Self> {
        if edges.nrows() != edges.ncols() {
            return Err(Error::Shape(format!(
                "adjacency must be square, got {}x{}",
                edges.nrows(),
                edges.ncols()
            )));
        }
        if edges.iter().any(|&e| e > 1) {
            return Err(Error::InvalidArgument("adjacency entries must be 0 or 1".into()));
        }
        Ok(GroundTruthAdjacency { edges })
    }

    pub fn from_bool(edges: &Array2<bool>) -> Self {
        GroundTruthAdjacency {
            edges: edges.mapv(u8::from),
        }
    }

    pub fn n(&self) -> usize {
        self.edges.nrows()
    }

    pub fn edges(&self) -> ArrayView2<'_, u8> {
        self.edges.view()
    }

    pub fn has_edge(&self, target: usize, source: usize) -> bool {
        self.edges[[target, source]] == 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e == 1).count()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for row in self.edges.rows() {
            let cells: Vec<String> = row.iter().map(|e| e.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lorenz96Config {
    pub n: usize,
    /// Forcing magnitude `F`.
    pub forcing: f64,
    /// Retained sample count `T`.
    pub samples: usize,
    /// RK4 step in ODE time units.
    pub integrator_step: f64,
    /// Integrator steps between retained samples.
    pub sample_stride: usize,
    /// Retained-sample-sized chunks discarded before recording.
    pub burn_in: usize,
    pub obs_noise_std: f64,
    /// Std of the perturbation added to the all-`F` initial state.
    pub init_perturbation_std: f64,
    /// Overrides the perturbed all-`F` start when set.
    pub initial_state: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for Lorenz96Config {
    fn default() -> Self {
        Lorenz96Config {
            n: 10,
            forcing: 10.0,
            samples: 500,
            integrator_step: 0.01,
            sample_stride: 5,
            burn_in: 1000,
            obs_noise_std: 0.1,
            init_perturbation_std: 0.1,
            initial_state: None,
            seed: 0,
        }
    }
}

impl Lorenz96Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n < 4 {
            return bad(format!("Lorenz-96 needs n >= 4, got {}", self.n));
        }
        if self.samples < 2 {
            return bad(format!("Lorenz-96 needs at least 2 samples, got {}", self.samples));
        }
        if !(self.integrator_step > 0.0 && self.integrator_step.is_finite()) {
            return bad(format!("integrator_step must be positive, got {}", self.integrator_step));
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1".into());
        }
        if !(self.obs_noise_std >= 0.0) || !(self.init_perturbation_std >= 0.0) {
            return bad("noise standard deviations must be nonnegative".into());
        }
        if !self.forcing.is_finite() {
            return bad("forcing must be finite".into());
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != self.n {
                return bad(format!("initial_state has {} entries, expected {}", x0.len(), self.n));
            }
        }
        Ok(())
    }
}

fn lorenz96_rhs(x: &[f64], forcing: f64, out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let im1 = x[(i + n - 1) % n];
        let im2 = x[(i + n - 2) % n];
        let ip1 = x[(i + 1) % n];
        out[i] = -im1 * (im2 - ip1) - x[i] + forcing;
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, x: &mut [f64], forcing: f64, h: f64) {
        let n = x.len();
        lorenz96_rhs(x, forcing, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        lorenz96_rhs(&self.tmp, forcing, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        lorenz96_rhs(&self.tmp, forcing, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        lorenz96_rhs(&self.tmp, forcing, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Lorenz-96 ground truth: `(i, j) = 1` iff `j` is in `{i-2, i-1, i, i+1} mod n`.
pub fn lorenz96_truth(n: usize) -> GroundTruthAdjacency {
    let mut edges = Array2::<u8>::zeros((n, n));
    for i in 0..n {
        for off in [n - 2, n - 1, 0, 1] {
            edges[[i, (i + off) % n]] = 1;
        }
    }
    GroundTruthAdjacency { edges }
}

/// Integrates `dx_i/dt = -x_{i-1}(x_{i-2} - x_{i+1}) - x_i + F` with classical
/// RK4, keeping every `sample_stride`-th state after the burn-in, then adds
/// i.i.d. Gaussian observation noise.
pub fn simulate_lorenz96(cfg: &Lorenz96Config) -> Result<(TimeSeriesDataset, GroundTruthAdjacency)> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = SeededRng::new(cfg.seed);
    let mut x: Vec<f64> = match &cfg.initial_state {
        Some(x0) => x0.clone(),
        None => {
            let mut x = vec![cfg.forcing; n];
            if cfg.init_perturbation_std > 0.0 {
                let pert = Normal::new(0.0, cfg.init_perturbation_std).expect("valid std");
                x.iter_mut().for_each(|v| *v += pert.sample(&mut rng));
            }
            x
        }
    };
    let mut rk = Rk4::new(n);
    let mut step = 0usize;
    let mut advance = |x: &mut Vec<f64>, rk: &mut Rk4| -> Result<()> {
        for _ in 0..cfg.sample_stride {
            rk.step(x, cfg.forcing, cfg.integrator_step);
            step += 1;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { step });
            }
        }
        Ok(())
    };
    for _ in 0..cfg.burn_in {
        advance(&mut x, &mut rk)?;
    }
    let mut series = Array2::<f64>::zeros((cfg.samples, n));
    for t in 0..cfg.samples {
        if t > 0 {
            advance(&mut x, &mut rk)?;
        }
        series.row_mut(t).assign(&ndarray::ArrayView1::from(&x));
    }
    if cfg.obs_noise_std > 0.0 {
        let noise = Normal::new(0.0, cfg.obs_noise_std).expect("valid std");
        series.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    Ok((TimeSeriesDataset::single(series)?, lorenz96_truth(n)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarConfig {
    pub n: usize,
    /// Fraction of the `n^2` coefficient positions that are nonzero.
    pub support_fraction: f64,
    pub coeff_value: f64,
    /// Noise covariance is `noise_cov_scale * I`.
    pub noise_cov_scale: f64,
    pub samples: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for VarConfig {
    fn default() -> Self {
        VarConfig {
            n: 10,
            support_fraction: 0.3,
            coeff_value: 0.0994,
            noise_cov_scale: 0.01,
            samples: 1000,
            burn_in: 100,
            seed: 0,
        }
    }
}

pub const VAR_ORDER: usize = 3;

/// Lag matrices of a VAR(3) process sharing one support mask.
#[derive(Clone, Debug, PartialEq)]
pub struct VarSystem {
    pub lags: [Array2<f64>; VAR_ORDER],
    pub mask: Array2<bool>,
}

impl VarSystem {
    /// Companion matrix of size `3n x 3n`.
    pub fn companion(&self) -> Array2<f64> {
        let n = self.mask.nrows();
        let dim = VAR_ORDER * n;
        let mut c = Array2::<f64>::zeros((dim, dim));
        for (l, a) in self.lags.iter().enumerate() {
            c.slice_mut(ndarray::s![0..n, l * n..(l + 1) * n]).assign(a);
        }
        for k in n..dim {
            c[[k, k - n]] = 1.0;
        }
        c
    }

    pub fn spectral_radius(&self) -> f64 {
        let c = self.companion();
        let dim = c.nrows();
        let m = DMatrix::from_row_iterator(dim, dim, c.iter().copied());
        m.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl VarConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 {
            return bad("VAR needs n >= 1".into());
        }
        if !(self.support_fraction > 0.0 && self.support_fraction <= 1.0) {
            return bad(format!("support_fraction must be in (0, 1], got {}", self.support_fraction));
        }
        if !(self.noise_cov_scale >= 0.0 && self.noise_cov_scale.is_finite()) {
            return bad(format!("noise_cov_scale must be nonnegative, got {}", self.noise_cov_scale));
        }
        if self.samples < 2 {
            return bad(format!("VAR needs at least 2 samples, got {}", self.samples));
        }
        if !self.coeff_value.is_finite() {
            return bad("coeff_value must be finite".into());
        }
        Ok(())
    }

    pub fn support_size(&self) -> usize {
        let total = self.n * self.n;
        ((self.support_fraction * total as f64).ceil() as usize).min(total)
    }

    /// Draws the joint support mask and fills all three lag matrices.
    pub fn build_system(&self, rng: &mut SeededRng) -> Result<VarSystem> {
        self.validate()?;
        let n = self.n;
        let mut mask = Array2::from_elem((n, n), false);
        for pos in index::sample(rng, n * n, self.support_size()).into_iter() {
            mask[[pos / n, pos % n]] = true;
        }
        let a = mask.mapv(|m| if m { self.coeff_value } else { 0.0 });
        Ok(VarSystem {
            lags: [a.clone(), a.clone(), a],
            mask,
        })
    }
}

/// Simulates `x_t = A1 x_{t-1} + A2 x_{t-2} + A3 x_{t-3} + w_t` from zero
/// initial conditions, discarding `burn_in` samples. Unstable systems are
/// rejected before any simulation.
pub fn simulate_var3(cfg: &VarConfig) -> Result<(TimeSeriesDataset, GroundTruthAdjacency)> {
    let mut rng = SeededRng::new(cfg.seed);
    let system = cfg.build_system(&mut rng)?;
    let spectral_radius = system.spectral_radius();
    if !(spectral_radius < 1.0) {
        return Err(Error::Unstable { spectral_radius });
    }
    let n = cfg.n;
    let total = cfg.burn_in + cfg.samples;
    let noise = if cfg.noise_cov_scale > 0.0 {
        Some(Normal::new(0.0, cfg.noise_cov_scale.sqrt()).expect("valid std"))
    } else {
        None
    };
    let mut history = Array2::<f64>::zeros((total + VAR_ORDER, n));
    for t in VAR_ORDER..total + VAR_ORDER {
        let mut next = Array1::<f64>::zeros(n);
        for (l, a) in system.lags.iter().enumerate() {
            next += &a.dot(&history.row(t - 1 - l));
        }
        if let Some(noise) = &noise {
            next.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        history.row_mut(t).assign(&next);
    }
    let series = history
        .slice(ndarray::s![VAR_ORDER + cfg.burn_in.., ..])
        .to_owned();
    let truth = GroundTruthAdjacency::from_bool(&system.mask);
    Ok((TimeSeriesDataset::single(series)?, truth))
}

/// Per-component affine map applied by [`standardize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn invert(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        let sequences = ds
            .sequences()
            .iter()
            .map(|s| {
                let mut s = s.clone();
                for (j, mut col) in s.columns_mut().into_iter().enumerate() {
                    col.mapv_inplace(|v| v * self.scales[j] + self.means[j]);
                }
                s
            })
            .collect();
        TimeSeriesDataset::new(sequences, Some(ds.labels().to_vec()))
    }
}

/// Per-component z-scoring with mean and (population) standard deviation
/// pooled over all sequences.
pub fn standardize(ds: &TimeSeriesDataset) -> Result<(TimeSeriesDataset, Standardization)> {
    let n = ds.n();
    let count = ds.total_samples() as f64;
    let mut means = vec![0.0; n];
    for seq in ds.sequences() {
        for row in seq.rows() {
            for j in 0..n {
                means[j] += row[j];
            }
        }
    }
    means.iter_mut().for_each(|m| *m /= count);
    let mut vars = vec![0.0; n];
    for seq in ds.sequences() {
        for row in seq.rows() {
            for j in 0..n {
                let d = row[j] - means[j];
                vars[j] += d * d;
            }
        }
    }
    let scales: Vec<f64> = vars.iter().map(|v| (v / count).sqrt()).collect();
    if let Some(component) = scales.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroVariance { component });
    }
    let sequences = ds
        .sequences()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for (j, mut col) in s.columns_mut().into_iter().enumerate() {
                col.mapv_inplace(|v| (v - means[j]) / scales[j]);
            }
            s
        })
        .collect();
    let out = TimeSeriesDataset::new(sequences, Some(ds.labels().to_vec()))?;
    Ok((out, Standardization { means, scales }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pooled_moments(ds: &TimeSeriesDataset, j: usize) -> (f64, f64) {
        let vals: Vec<f64> = ds.sequences().iter().flat_map(|s| s.column(j).to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var.sqrt())
    }

    #[test]
    fn lorenz_fixed_point_stays_constant() {
        let cfg = Lorenz96Config {
            forcing: 8.0,
            obs_noise_std: 0.0,
            init_perturbation_std: 0.0,
            burn_in: 10,
            samples: 50,
            ..Default::default()
        };
        let (ds, _) = simulate_lorenz96(&cfg).unwrap();
        assert!(ds.sequences()[0].iter().all(|&v| v == 8.0));
    }

    #[test]
    fn lorenz_truth_has_four_cyclic_parents() {
        let truth = lorenz96_truth(10);
        for i in 0..10 {
            let parents: Vec<usize> = (0..10).filter(|&j| truth.has_edge(i, j)).collect();
            assert_eq!(parents.len(), 4);
            for off in [-2i64, -1, 0, 1] {
                let j = (i as i64 + off).rem_euclid(10) as usize;
                assert!(truth.has_edge(i, j));
            }
        }
    }

    #[test]
    fn lorenz_truth_is_circulant() {
        let truth = lorenz96_truth(7);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(truth.edges()[[i, j]], truth.edges()[[0, (j + 7 - i) % 7]]);
            }
        }
    }

    #[test]
    fn lorenz_step_halving_converges() {
        // start on the attractor
        let (warm, _) = simulate_lorenz96(&Lorenz96Config {
            forcing: 10.0,
            samples: 2,
            obs_noise_std: 0.0,
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let x0 = warm.sequences()[0].row(1).to_vec();
        // base step 0.0025 keeps the sampling interval at 0.05
        let base = Lorenz96Config {
            forcing: 10.0,
            samples: 10,
            burn_in: 0,
            integrator_step: 0.0025,
            sample_stride: 20,
            obs_noise_std: 0.0,
            initial_state: Some(x0),
            ..Default::default()
        };
        let (coarse, _) = simulate_lorenz96(&base).unwrap();
        let (fine, _) = simulate_lorenz96(&Lorenz96Config {
            integrator_step: base.integrator_step / 2.0,
            sample_stride: base.sample_stride * 2,
            ..base.clone()
        })
        .unwrap();
        let diff = (&coarse.sequences()[0] - &fine.sequences()[0])
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-6, "max diff {diff}");
    }

    #[test]
    fn lorenz_divergence_reports_step() {
        let cfg = Lorenz96Config {
            integrator_step: 5.0,
            forcing: 40.0,
            burn_in: 100,
            ..Default::default()
        };
        match simulate_lorenz96(&cfg) {
            Err(Error::Diverged { step }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn lorenz_rejects_small_n() {
        assert!(simulate_lorenz96(&Lorenz96Config { n: 3, ..Default::default() }).is_err());
    }

    #[test]
    fn var_zero_noise_is_identically_zero() {
        let cfg = VarConfig {
            noise_cov_scale: 0.0,
            samples: 50,
            ..Default::default()
        };
        let (ds, _) = simulate_var3(&cfg).unwrap();
        assert!(ds.sequences()[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn var_default_support_density() {
        let (_, truth) = simulate_var3(&VarConfig { samples: 10, seed: 1, ..Default::default() }).unwrap();
        assert_eq!(truth.edge_count(), 30);
    }

    #[test]
    fn var_default_system_is_stable() {
        let cfg = VarConfig::default();
        let sys = cfg.build_system(&mut SeededRng::new(1)).unwrap();
        assert!(sys.spectral_radius() < 1.0);
    }

    #[test]
    fn var_spectral_radius_matches_lag_sum_for_nonnegative_system() {
        // Nonnegative lags: radius < 1 iff rho(A1 + A2 + A3) < 1, and a unit
        // spectral radius of the lag sum gives a unit companion root.
        let a = Array2::from_shape_vec((2, 2), vec![0.2, 0.1, 0.0, 1.0 / 3.0]).unwrap();
        let sys = VarSystem {
            lags: [a.clone(), a.clone(), a],
            mask: Array2::from_elem((2, 2), true),
        };
        assert!((sys.spectral_radius() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn var_unstable_rejected() {
        let cfg = VarConfig {
            coeff_value: 0.5,
            ..Default::default()
        };
        assert!(matches!(simulate_var3(&cfg), Err(Error::Unstable { .. })));
    }

    #[test]
    fn var_is_reproducible() {
        let cfg = VarConfig { samples: 200, seed: 4, ..Default::default() };
        let a = simulate_var3(&cfg).unwrap();
        let b = simulate_var3(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn standardize_moments() {
        let (ds, _) = simulate_var3(&VarConfig { samples: 300, seed: 2, ..Default::default() }).unwrap();
        let (z, _) = standardize(&ds).unwrap();
        for j in 0..z.n() {
            let (m, s) = pooled_moments(&z, j);
            assert!(m.abs() < 1e-12);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_is_idempotent_and_invertible() {
        let (ds, _) = simulate_lorenz96(&Lorenz96Config { samples: 100, ..Default::default() }).unwrap();
        let (z, tf) = standardize(&ds).unwrap();
        let (zz, _) = standardize(&z).unwrap();
        let d = (&z.sequences()[0] - &zz.sequences()[0]).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(d < 1e-12);
        let back = tf.invert(&z).unwrap();
        let d = (&back.sequences()[0] - &ds.sequences()[0]).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(d < 1e-9);
    }

    #[test]
    fn standardize_pools_over_sequences() {
        let a = Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).unwrap();
        let b = Array2::from_shape_vec((2, 1), vec![2.0, 3.0]).unwrap();
        let ds = TimeSeriesDataset::new(vec![a, b], None).unwrap();
        let (_, tf) = standardize(&ds).unwrap();
        assert_eq!(tf.means, vec![1.5]);
    }

    #[test]
    fn standardize_names_constant_component() {
        let mut s = Array2::from_shape_fn((5, 3), |(t, j)| (t * (j + 1)) as f64);
        s.column_mut(1).fill(2.0);
        let ds = TimeSeriesDataset::single(s).unwrap();
        match standardize(&ds) {
            Err(Error::ZeroVariance { component }) => assert_eq!(component, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dataset_rejects_short_or_ragged_sequences() {
        assert!(TimeSeriesDataset::single(Array2::zeros((1, 3))).is_err());
        let r = TimeSeriesDataset::new(vec![Array2::zeros((3, 2)), Array2::zeros((3, 3))], None);
        assert!(r.is_err());
        let mut s = Array2::zeros((3, 2));
        s[[1, 1]] = f64::NAN;
        assert!(TimeSeriesDataset::single(s).is_err());
    }

    #[test]
    fn csv_layout() {
        let s = Array2::from_shape_vec((2, 2), vec![1.0, -0.5, 0.1, 2.0]).unwrap();
        let ds = TimeSeriesDataset::single(s).unwrap();
        let text = ds.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x0,x1"));
        assert_eq!(lines.next(), Some("1.0000000000000000e0,-5.0000000000000000e-1"));
        let multi = TimeSeriesDataset::new(vec![Array2::zeros((2, 1)), Array2::ones((2, 1))], None).unwrap();
        assert!(multi.to_csv_string().starts_with("sequence_id,x0\n0,"));
        assert_eq!(lorenz96_truth(5).to_csv_string().lines().next(), Some("1,1,0,1,1"));
    }
}
