//! Forward pass, loss, prediction, and the full analytic backward pass.

use crate::error::{Error, Result};
use crate::window::PhaseWindow;

use super::arch::Op;
use super::layers::{
    avgpool_backward, avgpool_forward, conv_backward, conv_forward, global_pool,
    global_pool_backward, relu, relu_backward, Feature,
};
use super::params::ModelParams;

/// Probabilities are clamped into this range before the log-loss so it stays
/// finite at saturation.
pub const PROB_CLAMP: f64 = 1e-7;

fn sigmoid(logit: f64) -> f64 {
    1.0 / (1.0 + (-logit).exp())
}

/// Binary cross-entropy of a predicted probability against a 0/1 label.
pub fn bce_loss(y_hat: f64, y: u8) -> f64 {
    let p = y_hat.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn input_feature(params: &ModelParams, window: &PhaseWindow) -> Result<Feature> {
    let arch = &params.plan().arch;
    if window.h() != arch.input_h || window.w() != arch.input_w {
        return Err(Error::ShapeMismatch {
            want_h: arch.input_h,
            want_w: arch.input_w,
            got_h: window.h(),
            got_w: window.w(),
        });
    }
    Ok(Feature {
        c: 1,
        h: window.h(),
        w: window.w(),
        data: window.as_slice().iter().map(|&v| v as f64).collect(),
    })
}

struct Traversal {
    /// Post-op activation per op index (feature ops only).
    acts: Vec<Option<Feature>>,
    /// Pre-activation per conv op, for the ReLU gate.
    pres: Vec<Option<Feature>>,
    pooled: Vec<f64>,
    logit: f64,
}

fn run_forward(params: &ModelParams, input: Feature, keep: bool) -> Traversal {
    let plan = params.plan();
    let data = params.data();
    let n_ops = plan.ops.len();
    let mut acts: Vec<Option<Feature>> = Vec::with_capacity(if keep { n_ops } else { 0 });
    let mut pres: Vec<Option<Feature>> = Vec::with_capacity(if keep { n_ops } else { 0 });
    let mut residual: Vec<Feature> = Vec::new();
    let mut current = input;
    let mut pooled = Vec::new();
    let mut logit = 0.0;

    for op in &plan.ops {
        let mut pre_for_cache: Option<Feature> = None;
        match op {
            Op::Conv { shape, w_off, b_off } => {
                let w = &data[*w_off..*w_off + shape.weight_len()];
                let b = &data[*b_off..*b_off + shape.out_c];
                let pre = conv_forward(&current, w, b, shape);
                let post = relu(&pre);
                if keep {
                    pre_for_cache = Some(pre);
                }
                current = post;
            }
            Op::Pool { k, .. } => {
                current = avgpool_forward(&current, k.0, k.1);
            }
            Op::ResidualSave => {
                residual.push(current.clone());
            }
            Op::ResidualAdd => {
                let saved = residual.pop().expect("balanced residual ops");
                for (v, s) in current.data.iter_mut().zip(&saved.data) {
                    *v += s;
                }
            }
            Op::GlobalPool { .. } => {
                pooled = global_pool(&current);
            }
            Op::Dense { in_c, w_off, b_off } => {
                let w = &data[*w_off..*w_off + *in_c];
                logit = data[*b_off]
                    + w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        if keep {
            pres.push(pre_for_cache);
            let cache_act = match op {
                Op::GlobalPool { .. } | Op::Dense { .. } => None,
                _ => Some(current.clone()),
            };
            acts.push(cache_act);
        }
    }

    Traversal {
        acts,
        pres,
        pooled,
        logit,
    }
}

/// Raw pre-sigmoid output.
pub fn forward_logit(params: &ModelParams, window: &PhaseWindow) -> Result<f64> {
    let input = input_feature(params, window)?;
    Ok(run_forward(params, input, false).logit)
}

/// Predicted probability of the cycling class.
pub fn forward(params: &ModelParams, window: &PhaseWindow) -> Result<f64> {
    Ok(sigmoid(forward_logit(params, window)?))
}

/// Hard decision: probability at or above one half maps to label 1.
pub fn predict(params: &ModelParams, window: &PhaseWindow) -> Result<u8> {
    Ok(if forward(params, window)? >= 0.5 { 1 } else { 0 })
}

/// Loss and its exact gradient with respect to every parameter.
///
/// The gradient at the logit is the standard `y_hat - y` of the unclamped
/// cross-entropy; the clamp in [`bce_loss`] only guards the reported value.
pub fn backward(params: &ModelParams, window: &PhaseWindow, y: u8) -> Result<(f64, ModelParams)> {
    let input = input_feature(params, window)?;
    let plan = params.plan().clone();
    let data = params.data();
    let trav = run_forward(params, input.clone(), true);

    let y_hat = sigmoid(trav.logit);
    let loss = bce_loss(y_hat, y);
    let dlogit = y_hat - f64::from(y);

    let mut grad = params.zeros_like();
    let gdata = grad.data_mut();

    // Gradient flowing backward through the feature pipeline.
    let mut dfeat: Option<Feature> = None;
    let mut dpooled: Vec<f64> = Vec::new();
    let mut residual_grads: Vec<Feature> = Vec::new();

    for (i, op) in plan.ops.iter().enumerate().rev() {
        match op {
            Op::Dense { in_c, w_off, b_off } => {
                gdata[*b_off] += dlogit;
                let w = &data[*w_off..*w_off + *in_c];
                dpooled = w.iter().map(|&wv| wv * dlogit).collect();
                for (g, p) in gdata[*w_off..*w_off + *in_c].iter_mut().zip(&trav.pooled) {
                    *g += dlogit * p;
                }
            }
            Op::GlobalPool { c, h, w } => {
                dfeat = Some(global_pool_backward(&dpooled, *c, *h, *w));
            }
            Op::ResidualAdd => {
                // Skip branch: a copy joins the gradient again at ResidualSave.
                let d = dfeat.as_ref().expect("gradient present").clone();
                residual_grads.push(d);
            }
            Op::ResidualSave => {
                let skip = residual_grads.pop().expect("balanced residual ops");
                let d = dfeat.as_mut().expect("gradient present");
                for (v, s) in d.data.iter_mut().zip(&skip.data) {
                    *v += s;
                }
            }
            Op::Pool { k, c: _, in_h, in_w } => {
                let d = dfeat.take().expect("gradient present");
                dfeat = Some(avgpool_backward(&d, k.0, k.1, *in_h, *in_w));
            }
            Op::Conv { shape, w_off, b_off } => {
                let mut d = dfeat.take().expect("gradient present");
                let pre = trav.pres[i].as_ref().expect("conv cache");
                relu_backward(&mut d, pre);
                let conv_input: &Feature = if i == 0 {
                    &input
                } else {
                    trav.acts[i - 1].as_ref().expect("previous activation")
                };
                let need_dx = i > 0;
                let w = &data[*w_off..*w_off + shape.weight_len()];
                let (dx, dw, db) = conv_backward(conv_input, w, shape, &d, need_dx);
                for (g, v) in gdata[*w_off..*w_off + dw.len()].iter_mut().zip(&dw) {
                    *g += v;
                }
                for (g, v) in gdata[*b_off..*b_off + db.len()].iter_mut().zip(&db) {
                    *g += v;
                }
                dfeat = dx;
            }
        }
    }

    Ok((loss, grad))
}
