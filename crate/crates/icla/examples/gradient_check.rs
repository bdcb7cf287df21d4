//! Verify analytic gradients of both training objectives against central
//! finite differences on a small random network.
//!
//! Run with: cargo run --example gradient_check

use std::collections::BTreeSet;

use icla::model::{NetworkArch, NetworkParams};
use icla::nn::gradcheck::{max_relative_error, relu_kink_margin, DEFAULT_STEP};
use icla::nn::Matrix;
use icla::seed;
use icla::swd::SwdConfig;
use icla::trainer::{combined_loss, replay_loss, ReplayBatch};
use rand::Rng;

fn random_batch<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Matrix {
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    Matrix::from_rows(&rows)
}

fn onehot(labels: &[usize], classes: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..classes).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
        .collect();
    Matrix::from_rows(&rows)
}

fn main() -> icla::Result<()> {
    let arch = NetworkArch::small(5, vec![10, 8], 4);
    let classes = 3;
    let gamma = 0.7;
    let lambda = 0.25;

    // Central differences are only meaningful when no ReLU unit sits within
    // the probe step of its kink, so redraw until the margin is comfortable.
    let (mut params, x, y) = loop {
        let salt: u64 = rand::rng().random();
        let mut rng = seed::rng_for(9, "init", salt);
        let params = NetworkParams::new_seeded(&arch, classes, &mut rng);
        let x = random_batch(&mut rng, 6, 5);
        let y: Vec<usize> = (0..6).map(|i| i % classes).collect();
        let margin = relu_kink_margin(&params, &[&x]);
        if margin > 100.0 * DEFAULT_STEP {
            println!("kink margin {margin:.2e} (step {DEFAULT_STEP:.0e}), salt {salt}");
            break (params, x, y);
        }
    };
    let targets = onehot(&y, classes);

    // Objective 1: classification + reconstruction.
    let (_, grads) = combined_loss(&params, &x, &targets, gamma)?;
    let err = max_relative_error(
        &mut params,
        &grads,
        |p| combined_loss(p, &x, &targets, gamma).unwrap().0,
        DEFAULT_STEP,
    );
    println!("combined loss: max relative error {err:.3e}");

    // Objective 2: the same plus replayed data and embedding alignment.
    let mut rng = seed::rng_for(9, "pseudo", 1);
    let rx = random_batch(&mut rng, 6, 5);
    let rz = random_batch(&mut rng, 6, 4);
    let rl: Vec<usize> = (0..6).map(|i| i % classes).collect();
    let replay =
        ReplayBatch { inputs: &rx, onehot: &onehot(&rl, classes), labels: &rl, targets: Some(&rz) };
    let align: BTreeSet<usize> = rl.iter().copied().collect();
    let swd = SwdConfig { projections: 40, seed: 5 };

    let (_, grads, _) =
        replay_loss(&params, &x, &targets, &replay, gamma, lambda, &align, &swd)?;
    let err = max_relative_error(
        &mut params,
        &grads,
        |p| replay_loss(p, &x, &targets, &replay, gamma, lambda, &align, &swd).unwrap().0,
        DEFAULT_STEP,
    );
    println!("replay + alignment loss: max relative error {err:.3e}");
    Ok(())
}
