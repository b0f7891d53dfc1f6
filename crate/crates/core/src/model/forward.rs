use ndarray::ArrayView2;

use super::{slice, ModelParams};
use crate::error::{Error, Result};

/// out = W x, with `W` row-major `rows x cols`.
#[inline]
pub(crate) fn gemv(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// out += W x.
#[inline]
pub(crate) fn gemv_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out += W^T y.
#[inline]
pub(crate) fn gemv_t_acc(w: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    for (yi, row) in y.iter().zip(w.chunks_exact(cols)) {
        if *yi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yi;
        }
    }
}

/// G += a b^T.
#[inline]
pub(crate) fn outer_acc(g: &mut [f64], cols: usize, a: &[f64], b: &[f64]) {
    for (ai, row) in a.iter().zip(g.chunks_exact_mut(cols)) {
        if *ai == 0.0 {
            continue;
        }
        for (gij, bj) in row.iter_mut().zip(b) {
            *gij += ai * bj;
        }
    }
}

/// Intermediate values of one forward pass, kept for exact backpropagation.
///
/// Step `s` (0-based) consumes input row `s` and predicts row `s + 1`. The
/// state buffer holds `u_0 = 0` in row 0 and `u_{s+1}` in row `s + 1`.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub(crate) steps: usize,
    pub(crate) n: usize,
    pub(crate) inputs: Vec<f64>,
    /// State row feeding the feedback at each step; `None` means a zero state
    /// before the start of the sequence.
    pub(crate) source: Vec<Option<usize>>,
    pub(crate) encoded: Vec<f64>,
    pub(crate) fb_pre: Vec<Vec<f64>>,
    pub(crate) fb_post: Vec<Vec<f64>>,
    pub(crate) phi_pre: Vec<f64>,
    pub(crate) phi: Vec<f64>,
    pub(crate) states: Vec<f64>,
    pub(crate) out_pre: Vec<f64>,
    pub(crate) out: Vec<f64>,
    pub(crate) predictions: Vec<f64>,
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    /// Concatenated multi-scale state after step `s`, i.e. `u_{s+1}`.
    pub fn state(&self, s: usize) -> &[f64] {
        let md = self.states.len() / (self.steps + 1);
        &self.states[(s + 1) * md..(s + 2) * md]
    }

    pub fn phi(&self, s: usize) -> &[f64] {
        let d = self.phi.len() / self.steps;
        &self.phi[s * d..(s + 1) * d]
    }

    /// Feedback vector consumed at step `s`.
    pub fn feedback(&self, s: usize) -> &[f64] {
        let last = self.fb_post.last().expect("feedback has layers");
        let d = last.len() / self.steps;
        &last[s * d..(s + 1) * d]
    }

    pub fn output_features(&self, s: usize) -> &[f64] {
        let d = self.out.len() / self.steps;
        &self.out[s * d..(s + 1) * d]
    }
}

/// Runs the recurrence over `seq` (`T x n`, `T >= 2`) from a zero state and
/// returns the `T - 1` one-step-ahead predictions; prediction `s` targets row
/// `s + 1`. The trace is returned when requested.
pub fn forward(
    params: &ModelParams,
    seq: ArrayView2<'_, f64>,
    trace: bool,
) -> Result<(Vec<f64>, Option<ForwardTrace>)> {
    let tr = run(params, seq)?;
    if trace {
        Ok((tr.predictions.clone(), Some(tr)))
    } else {
        Ok((tr.predictions, None))
    }
}

pub(crate) fn run(params: &ModelParams, seq: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
    let n = params.n_inputs();
    if seq.ncols() != n {
        return Err(Error::Shape(format!(
            "sequence has {} components, model expects {n}",
            seq.ncols()
        )));
    }
    if seq.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "sequence needs at least 2 samples, got {}",
            seq.nrows()
        )));
    }
    let act = params.activation;
    let steps = seq.nrows() - 1;
    let d_phi = params.d_phi();
    let md = params.state_dim();
    let d_o = params.d_o();
    let alphas = params.scales.alphas();
    let lag = usize::from(params.feedback_lag);
    let enc_dim = params.feedback.encoder.as_ref().map_or(0, |d| d.nrows());

    let mut inputs = Vec::with_capacity(steps * n);
    for row in seq.rows().into_iter().take(steps) {
        inputs.extend(row.iter().copied());
    }
    let mut tr = ForwardTrace {
        steps,
        n,
        inputs,
        source: Vec::with_capacity(steps),
        encoded: vec![0.0; steps * enc_dim],
        fb_pre: params
            .feedback
            .layers
            .iter()
            .map(|l| vec![0.0; steps * l.out_dim()])
            .collect(),
        fb_post: params
            .feedback
            .layers
            .iter()
            .map(|l| vec![0.0; steps * l.out_dim()])
            .collect(),
        phi_pre: vec![0.0; steps * d_phi],
        phi: vec![0.0; steps * d_phi],
        states: vec![0.0; (steps + 1) * md],
        out_pre: vec![0.0; steps * d_o],
        out: vec![0.0; steps * d_o],
        predictions: vec![0.0; steps],
    };

    let w_in = slice(&params.w_in);
    let w_f = slice(&params.w_f);
    let b_in = slice(&params.b_in);
    let w_o = slice(&params.w_o);
    let b_o = slice(&params.b_o);
    let w_y = slice(&params.w_y);
    let zero_state = vec![0.0; md];

    for s in 0..steps {
        let source = s.checked_sub(lag);
        tr.source.push(source);

        // feedback from the (lagged) previous state
        {
            let src: &[f64] = match source {
                Some(row) => &tr.states[row * md..(row + 1) * md],
                None => &zero_state,
            };
            if let Some(d) = &params.feedback.encoder {
                gemv(slice(d), md, src, &mut tr.encoded[s * enc_dim..(s + 1) * enc_dim]);
            }
            for (l, layer) in params.feedback.layers.iter().enumerate() {
                let od = layer.out_dim();
                let id = layer.in_dim();
                let (done, rest) = tr.fb_post.split_at_mut(l);
                let input: &[f64] = if l > 0 {
                    &done[l - 1][s * id..(s + 1) * id]
                } else if enc_dim > 0 {
                    &tr.encoded[s * enc_dim..(s + 1) * enc_dim]
                } else {
                    src
                };
                let pre = &mut tr.fb_pre[l][s * od..(s + 1) * od];
                pre.copy_from_slice(slice(&layer.bias));
                gemv_acc(slice(&layer.weight), id, input, pre);
                if !pre.iter().sum::<f64>().is_finite() {
                    return Err(Error::NonFinite { stage: "feedback", step: s + 1 });
                }
                let post = &mut rest[0][s * od..(s + 1) * od];
                for (y, x) in post.iter_mut().zip(pre.iter()) {
                    *y = act.apply(*x);
                }
            }
        }

        let x = &tr.inputs[s * n..(s + 1) * n];
        let r = {
            let last = tr.fb_post.last().unwrap();
            let dr = last.len() / steps;
            &last[s * dr..(s + 1) * dr]
        };
        let pre = &mut tr.phi_pre[s * d_phi..(s + 1) * d_phi];
        pre.copy_from_slice(b_in);
        gemv_acc(w_in, n, x, pre);
        gemv_acc(w_f, r.len(), r, pre);
        if !pre.iter().sum::<f64>().is_finite() {
            return Err(Error::NonFinite { stage: "recurrent statistics", step: s + 1 });
        }
        let phi = &mut tr.phi[s * d_phi..(s + 1) * d_phi];
        for (y, x) in phi.iter_mut().zip(pre.iter()) {
            *y = act.apply(*x);
        }

        let (prev, next) = tr.states.split_at_mut((s + 1) * md);
        let prev = &prev[s * md..];
        let next = &mut next[..md];
        for (l, &a) in alphas.iter().enumerate() {
            let keep = 1.0 - a;
            for k in 0..d_phi {
                let i = l * d_phi + k;
                next[i] = keep * prev[i] + a * phi[k];
            }
        }

        let pre = &mut tr.out_pre[s * d_o..(s + 1) * d_o];
        pre.copy_from_slice(b_o);
        gemv_acc(w_o, md, next, pre);
        if !pre.iter().sum::<f64>().is_finite() {
            return Err(Error::NonFinite { stage: "output features", step: s + 1 });
        }
        let o = &mut tr.out[s * d_o..(s + 1) * d_o];
        for (y, x) in o.iter_mut().zip(pre.iter()) {
            *y = act.apply(*x);
        }
        let pred = params.b_y + w_y.iter().zip(o.iter()).map(|(a, b)| a * b).sum::<f64>();
        if !pred.is_finite() {
            return Err(Error::NonFinite { stage: "prediction", step: s + 1 });
        }
        tr.predictions[s] = pred;
    }
    Ok(tr)
}
