//! Fit a per-class Gaussian mixture to labeled points and sample it back.
//!
//! Run with: cargo run --example gmm_basics

use icla::gmm::{GaussianMixture, GmmConfig};
use icla::model::EmbeddingBatch;
use icla::nn::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> icla::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Two well-separated 2D clusters, 300 points each.
    let truth = [([0.0, 0.0], 0.5, 0usize), ([4.0, 1.0], 0.8, 1usize)];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (center, sd, class) in truth {
        let n = Normal::new(0.0, sd).unwrap();
        for _ in 0..300 {
            rows.push(vec![center[0] + n.sample(&mut rng), center[1] + n.sample(&mut rng)]);
            labels.push(class);
        }
    }
    let batch = EmbeddingBatch::new(Matrix::from_rows(&rows), labels);

    let gmm = GaussianMixture::fit_map(&batch, &GmmConfig::default())?;
    println!("fitted {} components over {} points", gmm.num_components(), batch.len());
    for c in &gmm.components {
        println!(
            "  class {}: weight {:.3}, mean ({:+.3}, {:+.3})",
            c.class_id, c.weight, c.mean[0], c.mean[1]
        );
    }

    // Draw fresh points; their empirical means land near the fitted ones.
    let draws = gmm.sample_balanced(500, &mut rng);
    for c in &gmm.components {
        let idx = draws.indices_of(c.class_id);
        let mut mean = [0.0f64; 2];
        for &i in &idx {
            mean[0] += draws.points.data()[i * 2];
            mean[1] += draws.points.data()[i * 2 + 1];
        }
        mean[0] /= idx.len() as f64;
        mean[1] /= idx.len() as f64;
        println!(
            "  class {}: {} draws, sample mean ({:+.3}, {:+.3})",
            c.class_id,
            idx.len(),
            mean[0],
            mean[1]
        );
    }
    Ok(())
}
