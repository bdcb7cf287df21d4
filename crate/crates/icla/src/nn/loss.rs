//! Batch-mean losses and their gradients.

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean softmax cross-entropy over the batch, with gradient wrt the logits:
/// `(softmax(logits) - onehot) / batch`.
pub fn cross_entropy(logits: &Matrix, onehot: &Matrix) -> Result<(f64, Matrix)> {
    if logits.rows() != onehot.rows() || logits.cols() != onehot.cols() {
        return Err(Error::shape(
            "cross_entropy",
            format!(
                "logits {}x{} vs targets {}x{}",
                logits.rows(),
                logits.cols(),
                onehot.rows(),
                onehot.cols()
            ),
        ));
    }
    let n = logits.rows() as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for i in 0..logits.rows() {
        let p = grad.row(i);
        let y = onehot.row(i);
        for (&pj, &yj) in p.iter().zip(y) {
            if yj != 0.0 {
                loss -= yj * pj.max(1e-300).ln();
            }
        }
    }
    for i in 0..grad.rows() {
        let g = grad.row_mut(i);
        let y = onehot.row(i);
        for (gj, &yj) in g.iter_mut().zip(y) {
            *gj = (*gj - yj) / n;
        }
    }
    Ok((loss / n, grad))
}

/// Mean squared Euclidean reconstruction error over the batch:
/// `(1/n) Σ_i ||xhat_i - x_i||²`, gradient wrt `xhat` is `2(xhat - x)/n`.
pub fn l2_reconstruction(xhat: &Matrix, x: &Matrix) -> Result<(f64, Matrix)> {
    if xhat.rows() != x.rows() || xhat.cols() != x.cols() {
        return Err(Error::shape(
            "l2_reconstruction",
            format!("{}x{} vs {}x{}", xhat.rows(), xhat.cols(), x.rows(), x.cols()),
        ));
    }
    let n = xhat.rows() as f64;
    let mut grad = Matrix::zeros(xhat.rows(), xhat.cols());
    let mut loss = 0.0;
    for i in 0..xhat.rows() {
        let a = xhat.row(i);
        let b = x.row(i);
        let g = grad.row_mut(i);
        for ((&ai, &bi), gi) in a.iter().zip(b).zip(g.iter_mut()) {
            let d = ai - bi;
            loss += d * d;
            *gi = 2.0 * d / n;
        }
    }
    Ok((loss / n, grad))
}
