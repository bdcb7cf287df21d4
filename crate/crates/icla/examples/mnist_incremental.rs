//! Class-incremental MNIST: two tasks of five digits each, trained with
//! generative replay. Needs the IDX files on disk.
//!
//! Run with: ICLA_DATA_DIR=data cargo run --release --example mnist_incremental

use icla::harness::config::DATA_DIR_ENV;
use icla::harness::{run_experiment, ExperimentConfig};

fn main() -> icla::Result<()> {
    let cfg = ExperimentConfig {
        protocol: "mnist2T".to_string(),
        strategy: "icla".to_string(),
        seeds: vec![1],
        epochs_per_task: 5,
        data_fraction: 0.25,
        output_dir: std::env::temp_dir()
            .join(format!("icla-mnist-{}", std::process::id()))
            .to_string_lossy()
            .into_owned(),
        ..ExperimentConfig::default()
    };

    if cfg.resolved_data_dir().is_none() {
        println!("set {DATA_DIR_ENV} (or data_dir in a config) to a directory holding mnist/;");
        println!("scripts/fetch_mnist.sh downloads the four IDX files.");
        return Ok(());
    }

    let outcome = run_experiment(&cfg)?;
    let curve = &outcome.curves[0].1;
    println!("digits 0-4, then 5-9 (25% subsample, 5 epochs each):");
    for horizon in 1..=2 {
        for task in 1..=horizon {
            println!(
                "  after task {horizon}: accuracy on task {task} = {:.4}",
                curve.accuracy_at(task, horizon).unwrap()
            );
        }
    }
    println!("final 10-class accuracy: {:.4}", curve.final_cumulative().unwrap());
    println!("curves and checkpoints under {}", outcome.run_dir.display());
    Ok(())
}
