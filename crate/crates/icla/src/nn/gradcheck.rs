//! Central-difference gradient verification against analytic backprop.

use crate::model::{NetworkParams, ParamGrads};
use crate::nn::layer::{Activation, DenseLayer};
use crate::nn::matrix::Matrix;

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares `analytic` against central differences of `loss` over every
/// parameter coordinate and returns the largest relative error, where the
/// per-coordinate error is `|a - n| / max(|a|, |n|, 1)`. The denominator floor
/// makes the measure behave like absolute error for near-zero gradients
/// (central differences bottom out around 1e-10 there).
pub fn max_relative_error<F>(params: &mut NetworkParams, analytic: &ParamGrads, mut loss: F, h: f64) -> f64
where
    F: FnMut(&NetworkParams) -> f64,
{
    let n = params.num_params();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let orig = params.param_get(i);
        params.param_set(i, orig + h);
        let up = loss(params);
        params.param_set(i, orig - h);
        let down = loss(params);
        params.param_set(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.grad_get(i);
        let scale = a.abs().max(numeric.abs()).max(1.0);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

/// Smallest |pre-activation| over every ReLU unit the given batches drive,
/// across encoder and decoder. Central differences are only trustworthy when
/// this margin comfortably exceeds the probe step: a unit sitting within `h`
/// of its kink makes the two-sided difference straddle a non-differentiable
/// point and report a spurious mismatch. Callers should redraw their test
/// case (new seed or inputs) until the margin clears ~100·h.
pub fn relu_kink_margin(params: &NetworkParams, batches: &[&Matrix]) -> f64 {
    let mut margin = f64::INFINITY;
    for &x in batches {
        let mut cur = x.clone();
        for layer in &params.encoder {
            cur = track_layer(layer, &cur, &mut margin);
        }
        for layer in &params.decoder {
            cur = track_layer(layer, &cur, &mut margin);
        }
    }
    margin
}

fn track_layer(layer: &DenseLayer, x: &Matrix, margin: &mut f64) -> Matrix {
    let mut pre = x.matmul_bt(&layer.weights).expect("layer shapes already validated");
    for r in 0..pre.rows() {
        for (v, b) in pre.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += *b;
        }
    }
    if layer.activation == Activation::Relu {
        for v in pre.data() {
            *margin = margin.min(v.abs());
        }
    }
    for v in pre.data_mut() {
        *v = layer.activation.apply(*v);
    }
    pre
}
