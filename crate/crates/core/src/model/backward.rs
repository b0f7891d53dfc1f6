use super::forward::{gemv_t_acc, outer_acc, ForwardTrace};
use super::{slice, slice_mut, ModelParams};
use crate::error::{Error, Result};

/// Gradient of the mean squared prediction error, stored in the same layout
/// as the parameters it differentiates.
pub type Gradients = ModelParams;

fn check_trace(params: &ModelParams, trace: &ForwardTrace, residuals: &[f64]) -> Result<()> {
    if residuals.len() != trace.steps {
        return Err(Error::TraceMismatch(format!(
            "{} residuals for a trace of {} steps",
            residuals.len(),
            trace.steps
        )));
    }
    if trace.n != params.n_inputs() {
        return Err(Error::TraceMismatch(format!(
            "trace has {} inputs, parameters expect {}",
            trace.n,
            params.n_inputs()
        )));
    }
    if trace.states.len() != (trace.steps + 1) * params.state_dim()
        || trace.fb_pre.len() != params.feedback.layers.len()
        || trace.out.len() != trace.steps * params.d_o()
        || trace.phi.len() != trace.steps * params.d_phi()
    {
        return Err(Error::TraceMismatch("layer sizes differ".into()));
    }
    let enc = params.feedback.encoder.as_ref().map_or(0, |d| d.nrows());
    if trace.encoded.len() != trace.steps * enc {
        return Err(Error::TraceMismatch("encoder width differs".into()));
    }
    for (l, layer) in params.feedback.layers.iter().enumerate() {
        if trace.fb_pre[l].len() != trace.steps * layer.out_dim() {
            return Err(Error::TraceMismatch(format!("feedback layer {l} width differs")));
        }
    }
    Ok(())
}

/// Backpropagation through time for `L = (1/S) * sum_s residuals[s]^2`,
/// where `S` is the number of steps in `trace` and
/// `residuals[s] = prediction[s] - target[s]`.
///
/// The encoder slot of the result is zero unless `train_encoder` is set.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    residuals: &[f64],
    train_encoder: bool,
) -> Result<Gradients> {
    check_trace(params, trace, residuals)?;
    let mut grads = params.zeros_like();
    let act = params.activation;
    let steps = trace.steps;
    let n = trace.n;
    let d_phi = params.d_phi();
    let md = params.state_dim();
    let d_o = params.d_o();
    let alphas = params.scales.alphas();
    let enc_dim = trace.encoded.len() / steps;
    let n_layers = params.feedback.layers.len();
    let scale = 2.0 / steps as f64;

    let w_f = slice(&params.w_f);
    let w_o = slice(&params.w_o);
    let w_y = slice(&params.w_y);

    let mut du = vec![0.0; (steps + 1) * md];
    let mut d_out = vec![0.0; d_o];
    let mut d_phi_pre = vec![0.0; d_phi];
    let mut d_src = vec![0.0; md];
    let max_width = params
        .feedback
        .layers
        .iter()
        .map(|l| l.out_dim().max(l.in_dim()))
        .max()
        .unwrap_or(0)
        .max(enc_dim);
    let mut d_h = vec![0.0; max_width];
    let mut d_z = vec![0.0; max_width];

    for s in (0..steps).rev() {
        let g = scale * residuals[s];
        if g == 0.0 && du[(s + 1) * md..(s + 2) * md].iter().all(|&v| v == 0.0) {
            continue;
        }
        let o = &trace.out[s * d_o..(s + 1) * d_o];
        let o_pre = &trace.out_pre[s * d_o..(s + 1) * d_o];
        {
            let gw_y = slice_mut(&mut grads.w_y);
            for k in 0..d_o {
                gw_y[k] += g * o[k];
                d_out[k] = g * w_y[k] * act.derivative_from_output(o_pre[k], o[k]);
            }
        }
        grads.b_y += g;
        let u_next = &trace.states[(s + 1) * md..(s + 2) * md];
        outer_acc(slice_mut(&mut grads.w_o), md, &d_out, u_next);
        slice_mut(&mut grads.b_o)
            .iter_mut()
            .zip(&d_out)
            .for_each(|(a, b)| *a += b);

        let (du_head, du_tail) = du.split_at_mut((s + 1) * md);
        let du_next = &mut du_tail[..md];
        gemv_t_acc(w_o, md, &d_out, du_next);
        let du_prev = &mut du_head[s * md..];

        // EWMA: u_{s+1} = (1 - a) u_s + a phi_s
        d_phi_pre.iter_mut().for_each(|v| *v = 0.0);
        for (l, &a) in alphas.iter().enumerate() {
            for k in 0..d_phi {
                let i = l * d_phi + k;
                d_phi_pre[k] += a * du_next[i];
                du_prev[i] += (1.0 - a) * du_next[i];
            }
        }
        let phi = &trace.phi[s * d_phi..(s + 1) * d_phi];
        let phi_pre = &trace.phi_pre[s * d_phi..(s + 1) * d_phi];
        for k in 0..d_phi {
            d_phi_pre[k] *= act.derivative_from_output(phi_pre[k], phi[k]);
        }
        let x = &trace.inputs[s * n..(s + 1) * n];
        outer_acc(slice_mut(&mut grads.w_in), n, &d_phi_pre, x);
        slice_mut(&mut grads.b_in)
            .iter_mut()
            .zip(&d_phi_pre)
            .for_each(|(a, b)| *a += b);
        let r = trace.feedback(s);
        let d_r = r.len();
        outer_acc(slice_mut(&mut grads.w_f), d_r, &d_phi_pre, r);

        // feedback stack, last layer first
        d_h[..d_r].iter_mut().for_each(|v| *v = 0.0);
        gemv_t_acc(w_f, d_r, &d_phi_pre, &mut d_h[..d_r]);
        let source = trace.source[s];
        let src: Option<&[f64]> = source.map(|row| &trace.states[row * md..(row + 1) * md]);
        let needs_src_grad = matches!(source, Some(row) if row > 0);
        for l in (0..n_layers).rev() {
            let layer = &params.feedback.layers[l];
            let od = layer.out_dim();
            let id = layer.in_dim();
            let pre = &trace.fb_pre[l][s * od..(s + 1) * od];
            let post = &trace.fb_post[l][s * od..(s + 1) * od];
            for k in 0..od {
                d_z[k] = d_h[k] * act.derivative_from_output(pre[k], post[k]);
            }
            let glayer = &mut grads.feedback.layers[l];
            slice_mut(&mut glayer.bias)
                .iter_mut()
                .zip(&d_z[..od])
                .for_each(|(a, b)| *a += b);
            let input: Option<&[f64]> = if l > 0 {
                Some(&trace.fb_post[l - 1][s * id..(s + 1) * id])
            } else if enc_dim > 0 {
                Some(&trace.encoded[s * enc_dim..(s + 1) * enc_dim])
            } else {
                src
            };
            if let Some(input) = input {
                outer_acc(slice_mut(&mut glayer.weight), id, &d_z[..od], input);
            }
            let propagate = l > 0 || enc_dim > 0 || needs_src_grad;
            if propagate {
                d_h[..id].iter_mut().for_each(|v| *v = 0.0);
                gemv_t_acc(slice(&layer.weight), id, &d_z[..od], &mut d_h[..id]);
            }
        }
        if let Some(d) = &params.feedback.encoder {
            let dv = &d_h[..enc_dim];
            if train_encoder {
                if let Some(src) = src {
                    let gd = grads.feedback.encoder.as_mut().expect("encoder slot");
                    outer_acc(slice_mut(gd), md, dv, src);
                }
            }
            if needs_src_grad {
                d_src.iter_mut().for_each(|v| *v = 0.0);
                gemv_t_acc(slice(d), md, dv, &mut d_src);
            }
        } else if needs_src_grad {
            d_src.copy_from_slice(&d_h[..md]);
        }
        if let (true, Some(row)) = (needs_src_grad, source) {
            du[row * md..(row + 1) * md]
                .iter_mut()
                .zip(&d_src)
                .for_each(|(a, b)| *a += b);
        }
    }
    Ok(grads)
}
