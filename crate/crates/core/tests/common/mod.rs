//! Independent reference computations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use srugc::model::{ModelKind, ModelParams, ModelSpec, Role, ScaleSet};
use srugc::numerics::{Activation, ActivationKind, SeededRng};

pub fn act(a: &Activation, x: f64) -> f64 {
    match a.kind {
        ActivationKind::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        ActivationKind::Elu => {
            if x > 0.0 {
                x
            } else {
                a.alpha * x.exp_m1()
            }
        }
    }
}

/// `bias[k] + sum_j w[k][j] * x[j]`, one row at a time, sum accumulated
/// left to right before the bias is added.
fn affine(w: &Array2<f64>, b: Option<&Array1<f64>>, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.nrows());
    for k in 0..w.nrows() {
        let mut s = 0.0;
        for j in 0..w.ncols() {
            s += w[[k, j]] * x[j];
        }
        out.push(match b {
            Some(b) => b[k] + s,
            None => s,
        });
    }
    out
}

/// Straight-line recurrence written directly from the model equations.
pub fn reference_forward(p: &ModelParams, seq: ArrayView2<'_, f64>) -> Vec<f64> {
    let h = |v: Vec<f64>| v.into_iter().map(|x| act(&p.activation, x)).collect::<Vec<f64>>();
    let alphas = p.scales.alphas();
    let d_phi = p.w_in.nrows();
    let md = alphas.len() * d_phi;
    let steps = seq.nrows() - 1;
    let lag = usize::from(p.feedback_lag);
    // states[t] = u_t, states[0] = 0
    let mut states: Vec<Vec<f64>> = vec![vec![0.0; md]];
    let mut preds = Vec::with_capacity(steps);
    for t in 0..steps {
        let src = if t >= lag { states[t - lag].clone() } else { vec![0.0; md] };
        let mut r = match &p.feedback.encoder {
            Some(d) => affine(d, None, &src),
            None => src,
        };
        for layer in &p.feedback.layers {
            r = h(affine(&layer.weight, Some(&layer.bias), &r));
        }
        let x: Vec<f64> = seq.row(t).to_vec();
        let a = affine(&p.w_in, Some(&p.b_in), &x);
        let f = affine(&p.w_f, None, &r);
        let phi = h(a.iter().zip(&f).map(|(a, f)| a + f).collect());
        let prev = &states[t];
        let mut u = vec![0.0; md];
        for (l, &al) in alphas.iter().enumerate() {
            for k in 0..d_phi {
                u[l * d_phi + k] = (1.0 - al) * prev[l * d_phi + k] + al * phi[k];
            }
        }
        let o = h(affine(&p.w_o, Some(&p.b_o), &u));
        let mut s = 0.0;
        for k in 0..o.len() {
            s += p.w_y[k] * o[k];
        }
        preds.push(p.b_y + s);
        states.push(u);
    }
    preds
}

pub fn mse(p: &ModelParams, seq: ArrayView2<'_, f64>, target: usize) -> f64 {
    let preds = reference_forward(p, seq);
    let steps = preds.len();
    preds
        .iter()
        .enumerate()
        .map(|(s, y)| (y - seq[[s + 1, target]]).powi(2))
        .sum::<f64>()
        / steps as f64
}

pub fn tiny_spec(kind: ModelKind) -> ModelSpec {
    ModelSpec {
        kind,
        d_phi: 3,
        d_r: 2,
        d_o: 3,
        encoder_dim: 2,
        stage2_layers: 2,
        stage2_width: 2,
        scales: ScaleSet::new(vec![0.3, 0.8]).unwrap(),
        ..ModelSpec::default()
    }
}

/// Parameters with every trainable entry (biases included) and the encoder
/// drawn uniformly from `[-scale, scale]`.
pub fn randomized(spec: &ModelSpec, n: usize, seed: u64, scale: f64) -> ModelParams {
    let mut rng = SeededRng::new(seed);
    let mut p = ModelParams::init(spec, n, &mut rng, None).unwrap();
    for (_, data) in p.tensors_mut() {
        for v in data.iter_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
    p
}

pub fn random_series(t: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeededRng::new(seed);
    Array2::from_shape_simple_fn((t, n), || rng.random_range(-1.0..1.0))
}

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over
/// every trainable coordinate, with central differences of step `h`.
pub fn max_gradient_error(
    p: &ModelParams,
    seq: ArrayView2<'_, f64>,
    target: usize,
    h: f64,
    floor: f64,
) -> (f64, String) {
    let (preds, trace) = srugc::model::forward(p, seq, true).unwrap();
    let residuals: Vec<f64> = preds
        .iter()
        .enumerate()
        .map(|(s, y)| y - seq[[s + 1, target]])
        .collect();
    let grads = srugc::model::backward(p, &trace.unwrap(), &residuals, true).unwrap();
    let analytic: Vec<(Role, Vec<f64>)> = grads.tensors().into_iter().map(|(r, g)| (r, g.to_vec())).collect();
    let mut worst = (0.0, String::new());
    for (t, (role, g)) in analytic.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let mut plus = p.clone();
            plus.tensors_mut()[t].1[i] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[t].1[i] -= h;
            let numeric = (mse(&plus, seq, target) - mse(&minus, seq, target)) / (2.0 * h);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if err > worst.0 {
                worst = (err, format!("{}[{i}]: analytic {a:e}, numeric {numeric:e}", role.name()));
            }
        }
    }
    worst
}

/// `u_t = sum_{s<=t} a (1-a)^(t-s) phi_s` evaluated directly.
pub fn ewma_closed_form(alpha: f64, phi: &[f64]) -> Vec<f64> {
    (1..=phi.len())
        .map(|t| {
            (1..=t)
                .map(|s| alpha * (1.0 - alpha).powi((t - s) as i32) * phi[s - 1])
                .sum()
        })
        .collect()
}
