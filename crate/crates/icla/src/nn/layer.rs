//! Fully connected layers with hand-written backprop.
//!
//! Weights are stored out×in so a batch forward is `x · W^T + b`. Activation
//! derivatives are computed from the activation *outputs*, which is exact for
//! the three supported functions and avoids caching pre-activations.

use rand::Rng;

use crate::error::Result;
use crate::nn::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Linear => x,
        }
    }

    /// d(activation)/d(pre-activation), expressed through the output value.
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// out_dim × in_dim.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform init on ±sqrt(6/(in+out)); biases start at zero.
    pub fn new_seeded<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> DenseLayer {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut weights = Matrix::zeros(out_dim, in_dim);
        for v in weights.data_mut() {
            *v = rng.random_range(-limit..limit);
        }
        DenseLayer { weights, bias: vec![0.0; out_dim], activation }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `activation(x · W^T + b)` for a batch of rows.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul_bt(&self.weights)?;
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v = self.activation.apply(*v + b);
            }
        }
        Ok(z)
    }
}

/// Gradients for one layer, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

/// Runs `x` through the stack, returning every activation including the input:
/// `acts[0] = x`, `acts[i] = layer_{i-1}(acts[i-1])`.
pub fn forward_stack(layers: &[DenseLayer], x: &Matrix) -> Result<Vec<Matrix>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.clone());
    for layer in layers {
        let next = layer.forward(acts.last().unwrap())?;
        acts.push(next);
    }
    Ok(acts)
}

/// Backpropagates `d_out` (gradient wrt the stack's output activations)
/// through the stack. Returns per-layer gradients (same order as `layers`)
/// and the gradient with respect to the stack input.
pub fn backward_stack(
    layers: &[DenseLayer],
    acts: &[Matrix],
    d_out: &Matrix,
) -> Result<(Vec<LayerGrad>, Matrix)> {
    assert_eq!(acts.len(), layers.len() + 1, "activation list out of sync with layer stack");
    let mut grads: Vec<Option<LayerGrad>> = (0..layers.len()).map(|_| None).collect();
    let mut delta = d_out.clone();
    for (idx, layer) in layers.iter().enumerate().rev() {
        let out = &acts[idx + 1];
        // delta := d_out ⊙ act'(out) — gradient wrt pre-activation.
        for i in 0..delta.rows() {
            let d_row = delta.row_mut(i);
            let o_row = out.row(i);
            for (d, &o) in d_row.iter_mut().zip(o_row) {
                *d *= layer.activation.grad_from_output(o);
            }
        }
        let dw = delta.matmul_at_b(&acts[idx])?;
        let mut db = vec![0.0; layer.out_dim()];
        for i in 0..delta.rows() {
            for (b, &d) in db.iter_mut().zip(delta.row(i)) {
                *b += d;
            }
        }
        let d_input = delta.matmul(&layer.weights)?;
        grads[idx] = Some(LayerGrad { dw, db });
        delta = d_input;
    }
    Ok((grads.into_iter().map(Option::unwrap).collect(), delta))
}
