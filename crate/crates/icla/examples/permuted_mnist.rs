//! Permuted MNIST drift: known digits keep returning under fresh pixel
//! permutations, so their input distribution shifts while labels persist.
//!
//! Run with: ICLA_DATA_DIR=data cargo run --release --example permuted_mnist

use icla::harness::config::DATA_DIR_ENV;
use icla::harness::{run_experiment, ExperimentConfig};

fn main() -> icla::Result<()> {
    let base = ExperimentConfig {
        protocol: "permuted3T".to_string(),
        seeds: vec![1],
        epochs_per_task: 5,
        data_fraction: 0.1,
        output_dir: std::env::temp_dir()
            .join(format!("icla-permuted-{}", std::process::id()))
            .to_string_lossy()
            .into_owned(),
        ..ExperimentConfig::default()
    };

    if base.resolved_data_dir().is_none() {
        println!("set {DATA_DIR_ENV} (or data_dir in a config) to a directory holding mnist/;");
        println!("scripts/fetch_mnist.sh downloads the four IDX files.");
        return Ok(());
    }

    for strategy in ["naive", "icla"] {
        let cfg = ExperimentConfig { strategy: strategy.to_string(), ..base.clone() };
        let outcome = run_experiment(&cfg)?;
        let curve = &outcome.curves[0].1;
        print!("{strategy}: accuracy per task split at the end");
        for task in 1..=3 {
            print!("  task{task} {:.3}", curve.accuracy_at(task, 3).unwrap());
        }
        println!("  (all seen classes {:.3})", curve.final_cumulative().unwrap());
    }
    Ok(())
}
