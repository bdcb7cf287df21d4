//! Sliced Wasserstein-2 distance between point sets, with gradients.
//!
//! Each of `projections` random unit directions reduces both sets to 1D,
//! where the squared W₂ distance has a closed form through sorted samples
//! (empirical inverse CDFs evaluated at midpoint quantiles). The reported
//! value is the average over directions; the gradient flows to the *first*
//! argument through the sort pairing, treating the second as a fixed target.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::EmbeddingBatch;
use crate::nn::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwdConfig {
    /// Number of random projection directions (L).
    pub projections: usize,
    /// Seed for the direction sampler; same seed, same directions.
    pub seed: u64,
}

impl Default for SwdConfig {
    fn default() -> Self {
        SwdConfig { projections: 50, seed: 0 }
    }
}

/// Squared sliced Wasserstein-2 distance between row sets `a` and `b`, plus
/// the gradient with respect to `a`'s rows. Column counts must match and both
/// sets must be non-empty with finite entries.
pub fn swd2(a: &Matrix, b: &Matrix, cfg: &SwdConfig) -> Result<(f64, Matrix)> {
    if a.cols() != b.cols() {
        return Err(Error::shape("swd2", format!("{} vs {} columns", a.cols(), b.cols())));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::shape("swd2", "empty point set".to_string()));
    }
    if cfg.projections == 0 {
        return Err(Error::Config("swd projections must be positive".to_string()));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Divergence("non-finite input to swd2".to_string()));
    }

    let dim = a.cols();
    let n = a.rows();
    let m = b.rows();
    let k_steps = n.max(m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut value = 0.0;
    let mut grad = Matrix::zeros(n, dim);
    let mut pa = vec![0.0; n];
    let mut pb = vec![0.0; m];
    let mut order_a: Vec<usize> = (0..n).collect();
    let mut order_b: Vec<usize> = (0..m).collect();
    let mut g_proj = vec![0.0; n];

    for _ in 0..cfg.projections {
        let theta = unit_direction(dim, &mut rng);
        for (p, i) in pa.iter_mut().zip(0..n) {
            *p = dot(a.row(i), &theta);
        }
        for (p, j) in pb.iter_mut().zip(0..m) {
            *p = dot(b.row(j), &theta);
        }
        // Stable order: ties broken by original index.
        order_a.sort_unstable_by(|&x, &y| pa[x].partial_cmp(&pa[y]).unwrap().then(x.cmp(&y)));
        order_b.sort_unstable_by(|&x, &y| pb[x].partial_cmp(&pb[y]).unwrap().then(x.cmp(&y)));

        g_proj.iter_mut().for_each(|g| *g = 0.0);
        let mut dir_value = 0.0;
        for k in 0..k_steps {
            // Inverse-CDF index at quantile (k+0.5)/K: ceil(q·n) - 1, done in
            // integers; equal sizes collapse to the plain sorted pairing.
            let ia = (n * (2 * k + 1)).div_ceil(2 * k_steps) - 1;
            let ib = (m * (2 * k + 1)).div_ceil(2 * k_steps) - 1;
            let d = pa[order_a[ia]] - pb[order_b[ib]];
            dir_value += d * d;
            g_proj[order_a[ia]] += 2.0 * d;
        }
        value += dir_value / k_steps as f64;
        let w = 1.0 / (k_steps as f64 * cfg.projections as f64);
        for i in 0..n {
            if g_proj[i] == 0.0 {
                continue;
            }
            let gi = g_proj[i] * w;
            for (g, &t) in grad.row_mut(i).iter_mut().zip(&theta) {
                *g = gi.mul_add(t, *g);
            }
        }
    }
    Ok((value / cfg.projections as f64, grad))
}

/// Sum of `swd2` over the given classes, restricted to same-class rows on both
/// sides. The gradient is scattered back to `current`'s row positions. A class
/// missing on either side is an alignment error naming the side.
pub fn class_conditional_swd(
    current: &EmbeddingBatch,
    target: &EmbeddingBatch,
    classes: &BTreeSet<usize>,
    cfg: &SwdConfig,
) -> Result<(f64, Matrix)> {
    let mut value = 0.0;
    let mut grad = Matrix::zeros(current.len(), current.dim());
    for &class in classes {
        let rows_cur = current.indices_of(class);
        if rows_cur.is_empty() {
            return Err(Error::Alignment { class, side: "current batch" });
        }
        let rows_tgt = target.indices_of(class);
        if rows_tgt.is_empty() {
            return Err(Error::Alignment { class, side: "replay batch" });
        }
        let sub_cur = current.points.select_rows(&rows_cur);
        let sub_tgt = target.points.select_rows(&rows_tgt);
        let (v, g) = swd2(&sub_cur, &sub_tgt, cfg)?;
        value += v;
        for (local, &orig) in rows_cur.iter().enumerate() {
            for (dst, &src) in grad.row_mut(orig).iter_mut().zip(g.row(local)) {
                *dst += src;
            }
        }
    }
    Ok((value, grad))
}

/// Gaussian vector normalized to unit length (re-drawn in the measure-zero
/// case of a vanishing norm, so the result is always well defined).
fn unit_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
