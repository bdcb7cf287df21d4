//! Class-conditional Gaussian mixtures over the embedding space.
//!
//! Components map one-to-one to classes; labels make the E-step trivial, so
//! the MAP fit is closed form: weights are class frequencies, means are class
//! means, covariances are population scatter matrices plus a small ridge.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::EmbeddingBatch;
use crate::nn::matrix::Matrix;

pub const BASE_RIDGE: f64 = 1e-6;
const MAX_RIDGE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    /// Keep only the diagonal of each covariance (cheaper, more robust when
    /// the class has few samples relative to the embedding dimension).
    pub diagonal: bool,
    /// Ridge added to covariances before factorization; escalated ×10 until
    /// the factorization succeeds or the 1e-2 cap is exceeded.
    pub ridge: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig { diagonal: false, ridge: BASE_RIDGE }
    }
}

#[derive(Debug, Clone)]
pub struct GmmComponent {
    pub class_id: usize,
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Regularized covariance (ridge already added).
    pub covariance: Matrix,
    /// Cached lower Cholesky factor of `covariance`.
    chol: Matrix,
}

impl GmmComponent {
    /// Rebuilds a component from stored (already regularized) parameters,
    /// recomputing the Cholesky factor. Fails if the covariance is not
    /// positive definite as stored.
    pub fn from_fitted(class_id: usize, weight: f64, mean: Vec<f64>, covariance: Matrix) -> Result<GmmComponent> {
        let chol = covariance.cholesky().ok_or_else(|| Error::Estimation {
            class: class_id,
            detail: "stored covariance is not positive definite".to_string(),
        })?;
        Ok(GmmComponent { class_id, weight, mean, covariance, chol })
    }

    /// log N(z; mean, covariance) via the Cholesky factor.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let d = self.mean.len();
        let r: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let y = self.chol.forward_substitute(&r);
        let maha: f64 = y.iter().map(|v| v * v).sum();
        let log_det: f64 = (0..d).map(|i| self.chol.get(i, i).ln()).sum::<f64>() * 2.0;
        -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + maha)
    }

    /// One draw `mean + L·g`, g standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.mean.len();
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let mut out = self.mean.clone();
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += self.chol.get(i, k) * g[k];
            }
            out[i] += acc;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GaussianMixture {
    pub dim: usize,
    /// Sorted by class id; weights sum to 1.
    pub components: Vec<GmmComponent>,
}

impl GaussianMixture {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.class_id).collect()
    }

    pub fn component_for(&self, class_id: usize) -> Option<&GmmComponent> {
        self.components.iter().find(|c| c.class_id == class_id)
    }

    /// Closed-form MAP fit on labeled embeddings: one component per distinct
    /// label, weight `|S_j|/n`, mean the class mean, covariance the population
    /// scatter `(1/|S_j|) Σ (z-μ)(z-μ)^T` plus the ridge.
    pub fn fit_map(batch: &EmbeddingBatch, cfg: &GmmConfig) -> Result<GaussianMixture> {
        if batch.is_empty() {
            return Err(Error::Estimation { class: 0, detail: "empty embedding batch".to_string() });
        }
        if !batch.points.is_finite() {
            return Err(Error::Estimation { class: 0, detail: "non-finite embeddings".to_string() });
        }
        let dim = batch.dim();
        let n = batch.len() as f64;
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in batch.labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        let mut components = Vec::with_capacity(by_class.len());
        for (&class_id, rows) in &by_class {
            let m = rows.len() as f64;
            let mut mean = vec![0.0; dim];
            for &r in rows {
                for (acc, &v) in mean.iter_mut().zip(batch.points.row(r)) {
                    *acc += v;
                }
            }
            for v in &mut mean {
                *v /= m;
            }
            let mut cov = Matrix::zeros(dim, dim);
            if cfg.diagonal {
                for &r in rows {
                    let row = batch.points.row(r);
                    for i in 0..dim {
                        let d = row[i] - mean[i];
                        cov.set(i, i, cov.get(i, i) + d * d);
                    }
                }
            } else {
                let mut centered = vec![0.0; dim];
                for &r in rows {
                    let row = batch.points.row(r);
                    for i in 0..dim {
                        centered[i] = row[i] - mean[i];
                    }
                    for i in 0..dim {
                        let ci = centered[i];
                        if ci == 0.0 {
                            continue;
                        }
                        let cov_row = &mut cov.data_mut()[i * dim..(i + 1) * dim];
                        for (c, &cj) in cov_row.iter_mut().zip(&centered) {
                            *c = ci.mul_add(cj, *c);
                        }
                    }
                }
            }
            cov.scale(1.0 / m);

            let (cov, chol) = regularize(cov, cfg.ridge, class_id)?;
            components.push(GmmComponent { class_id, weight: m / n, mean, covariance: cov, chol });
        }
        Ok(GaussianMixture { dim, components })
    }

    /// Refit after a task: embeddings of current data and (for tasks past the
    /// first) re-encoded pseudo data are pooled, and the mixture must end up
    /// with one component for every class seen so far.
    pub fn update_distribution(
        current: &EmbeddingBatch,
        pseudo: Option<&EmbeddingBatch>,
        expected_classes: &BTreeSet<usize>,
        cfg: &GmmConfig,
    ) -> Result<GaussianMixture> {
        let pooled = match pseudo {
            Some(p) => current.concat(p)?,
            None => current.clone(),
        };
        let present: BTreeSet<usize> = pooled.labels.iter().copied().collect();
        for &c in expected_classes {
            if !present.contains(&c) {
                return Err(Error::Estimation {
                    class: c,
                    detail: "class absent from the pooled fit sample".to_string(),
                });
            }
        }
        let gmm = GaussianMixture::fit_map(&pooled, cfg)?;
        debug_assert_eq!(gmm.num_components(), present.len());
        Ok(gmm)
    }

    /// Draws `per_class` embeddings from every component, labeled by the
    /// component's class, in class-id order.
    pub fn sample_balanced<R: Rng + ?Sized>(&self, per_class: usize, rng: &mut R) -> EmbeddingBatch {
        let mut points = Matrix::zeros(per_class * self.components.len(), self.dim);
        let mut labels = Vec::with_capacity(points.rows());
        let mut row = 0;
        for comp in &self.components {
            for _ in 0..per_class {
                let z = comp.sample(rng);
                points.row_mut(row).copy_from_slice(&z);
                labels.push(comp.class_id);
                row += 1;
            }
        }
        EmbeddingBatch::new(points, labels)
    }

    /// Per-row component responsibilities: row i holds
    /// `p(component j | z_i) ∝ weight_j · N(z_i; μ_j, Σ_j)`, normalized.
    pub fn component_posterior(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.dim {
            return Err(Error::shape("component_posterior", format!("{} vs dim {}", z.cols(), self.dim)));
        }
        let k = self.components.len();
        let mut out = Matrix::zeros(z.rows(), k);
        for i in 0..z.rows() {
            let zi = z.row(i);
            let logs: Vec<f64> =
                self.components.iter().map(|c| c.weight.ln() + c.log_density(zi)).collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            let row = out.row_mut(i);
            for (r, &l) in row.iter_mut().zip(&logs) {
                *r = (l - max).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
        }
        Ok(out)
    }

    /// Mixture restricted to the given classes, weights renormalized.
    pub fn restrict(&self, classes: &BTreeSet<usize>) -> Result<GaussianMixture> {
        let kept: Vec<GmmComponent> = self
            .components
            .iter()
            .filter(|c| classes.contains(&c.class_id))
            .cloned()
            .collect();
        if kept.is_empty() {
            return Err(Error::Estimation { class: *classes.iter().next().unwrap_or(&0), detail: "no matching components".to_string() });
        }
        let total: f64 = kept.iter().map(|c| c.weight).sum();
        let mut components = kept;
        for c in &mut components {
            c.weight /= total;
        }
        Ok(GaussianMixture { dim: self.dim, components })
    }
}

/// Adds `ridge` (escalating ×10 up to 1e-2) until the covariance factors.
fn regularize(cov: Matrix, base_ridge: f64, class_id: usize) -> Result<(Matrix, Matrix)> {
    let dim = cov.rows();
    let mut ridge = base_ridge;
    loop {
        let mut reg = cov.clone();
        for i in 0..dim {
            reg.set(i, i, reg.get(i, i) + ridge);
        }
        if let Some(chol) = reg.cholesky() {
            return Ok((reg, chol));
        }
        ridge *= 10.0;
        if ridge > MAX_RIDGE {
            return Err(Error::Estimation {
                class: class_id,
                detail: format!("covariance not positive definite up to ridge {MAX_RIDGE}"),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(rows: &[(Vec<f64>, usize)]) -> EmbeddingBatch {
        let points = Matrix::from_rows(&rows.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>());
        EmbeddingBatch::new(points, rows.iter().map(|(_, l)| *l).collect())
    }

    #[test]
    fn map_fit_matches_hand_computation() {
        // Class 0: (0,0), (2,0); class 1: (10,10).
        let b = batch(&[
            (vec![0.0, 0.0], 0),
            (vec![2.0, 0.0], 0),
            (vec![10.0, 10.0], 1),
        ]);
        let gmm = GaussianMixture::fit_map(&b, &GmmConfig::default()).unwrap();
        assert_eq!(gmm.class_ids(), vec![0, 1]);

        let c0 = &gmm.components[0];
        assert!((c0.weight - 2.0 / 3.0).abs() < 1e-12);
        assert!((c0.mean[0] - 1.0).abs() < 1e-12 && c0.mean[1].abs() < 1e-12);
        // Population scatter [[1,0],[0,0]] plus the 1e-6 ridge.
        assert!((c0.covariance.get(0, 0) - (1.0 + 1e-6)).abs() < 1e-12);
        assert!((c0.covariance.get(1, 1) - 1e-6).abs() < 1e-12);
        assert!(c0.covariance.get(0, 1).abs() < 1e-12);

        let c1 = &gmm.components[1];
        assert!((c1.weight - 1.0 / 3.0).abs() < 1e-12);
        assert!((c1.mean[0] - 10.0).abs() < 1e-12 && (c1.mean[1] - 10.0).abs() < 1e-12);
        assert!((c1.covariance.get(0, 0) - 1e-6).abs() < 1e-12);
        assert!((c1.covariance.get(1, 1) - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_one_and_order_is_by_class() {
        let b = batch(&[
            (vec![1.0, 1.0], 7),
            (vec![0.0, 0.0], 2),
            (vec![0.5, 0.5], 2),
            (vec![3.0, 3.0], 5),
        ]);
        let gmm = GaussianMixture::fit_map(&b, &GmmConfig::default()).unwrap();
        assert_eq!(gmm.class_ids(), vec![2, 5, 7]);
        let total: f64 = gmm.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_then_fit_recovers_parameters() {
        // Build a known 2-component mixture by fitting tight clusters, then
        // sample from it and fit again: the refit must recover means/weights.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 4000;
        let mut points = Matrix::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let (mx, label) = if i % 2 == 0 { (-3.0, 0) } else { (3.0, 1) };
            let g0: f64 = StandardNormal.sample(&mut rng);
            let g1: f64 = StandardNormal.sample(&mut rng);
            points.set(i, 0, mx + g0);
            points.set(i, 1, g1);
            labels.push(label);
        }
        let gmm = GaussianMixture::fit_map(&EmbeddingBatch::new(points, labels), &GmmConfig::default()).unwrap();

        let sampled = gmm.sample_balanced(3000, &mut rng);
        let refit = GaussianMixture::fit_map(&sampled, &GmmConfig::default()).unwrap();
        for (a, b) in gmm.components.iter().zip(&refit.components) {
            assert_eq!(a.class_id, b.class_id);
            assert!((a.weight - b.weight).abs() < 0.02);
            for (ma, mb) in a.mean.iter().zip(&b.mean) {
                assert!((ma - mb).abs() < 0.08, "mean {ma} vs {mb}");
            }
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a.covariance.get(i, j) - b.covariance.get(i, j)).abs() < 0.15);
                }
            }
        }
    }

    #[test]
    fn diagonal_mode_zeroes_cross_terms() {
        let b = batch(&[
            (vec![0.0, 0.0], 0),
            (vec![1.0, 1.0], 0),
            (vec![2.0, 2.0], 0),
        ]);
        let gmm = GaussianMixture::fit_map(&b, &GmmConfig { diagonal: true, ..Default::default() }).unwrap();
        assert_eq!(gmm.components[0].covariance.get(0, 1), 0.0);
        assert!(gmm.components[0].covariance.get(0, 0) > 0.5);
    }

    #[test]
    fn degenerate_cluster_gets_ridged_not_rejected() {
        // Single repeated point: scatter is all zeros; ridge must make it PD.
        let b = batch(&[(vec![1.0, 2.0, 3.0], 0), (vec![1.0, 2.0, 3.0], 0)]);
        let gmm = GaussianMixture::fit_map(&b, &GmmConfig::default()).unwrap();
        let c = &gmm.components[0];
        for i in 0..3 {
            assert!((c.covariance.get(i, i) - 1e-6).abs() < 1e-18);
        }
        // Sampling from it stays near the point.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = c.sample(&mut rng);
        assert!((z[0] - 1.0).abs() < 0.1);
    }

    #[test]
    fn component_posterior_rows_normalize_and_pick_nearest() {
        let b = batch(&[
            (vec![0.0, 0.0], 0),
            (vec![0.5, 0.0], 0),
            (vec![10.0, 0.0], 1),
            (vec![10.5, 0.0], 1),
        ]);
        let gmm = GaussianMixture::fit_map(&b, &GmmConfig::default()).unwrap();
        let q = Matrix::from_rows(&[vec![0.2, 0.0], vec![10.2, 0.0]]);
        let post = gmm.component_posterior(&q).unwrap();
        for i in 0..2 {
            let s: f64 = post.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(post.get(0, 0) > 0.99);
        assert!(post.get(1, 1) > 0.99);
    }

    #[test]
    fn update_distribution_requires_full_class_coverage() {
        let cur = batch(&[(vec![0.0, 0.0], 2), (vec![1.0, 0.0], 2)]);
        let pseudo = batch(&[(vec![5.0, 5.0], 0), (vec![6.0, 5.0], 0)]);
        let expected: BTreeSet<usize> = [0, 1, 2].into_iter().collect();
        let err = GaussianMixture::update_distribution(&cur, Some(&pseudo), &expected, &GmmConfig::default())
            .unwrap_err();
        match err {
            Error::Estimation { class, .. } => assert_eq!(class, 1),
            other => panic!("unexpected error {other:?}"),
        }

        let expected_ok: BTreeSet<usize> = [0, 2].into_iter().collect();
        let gmm = GaussianMixture::update_distribution(&cur, Some(&pseudo), &expected_ok, &GmmConfig::default())
            .unwrap();
        assert_eq!(gmm.class_ids(), vec![0, 2]);
        // Pooled weights: 2 of 4 rows each.
        assert!((gmm.components[0].weight - 0.5).abs() < 1e-12);
    }

    #[test]
    fn restrict_renormalizes() {
        let b = batch(&[
            (vec![0.0], 0),
            (vec![0.1], 0),
            (vec![5.0], 1),
            (vec![9.0], 2),
        ]);
        let gmm = GaussianMixture::fit_map(&b, &GmmConfig::default()).unwrap();
        let only: BTreeSet<usize> = [0, 2].into_iter().collect();
        let r = gmm.restrict(&only).unwrap();
        assert_eq!(r.class_ids(), vec![0, 2]);
        let total: f64 = r.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((r.components[0].weight - 2.0 / 3.0).abs() < 1e-12);
    }
}
