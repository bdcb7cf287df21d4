//! Catastrophic forgetting on synthetic blobs: naive fine-tuning loses the
//! first task, generative replay keeps it.
//!
//! Run with: cargo run --release --example blob_forgetting

use icla::data::protocols::{Protocol, StreamOptions};
use icla::trainer::{run_strategy, NullObserver, Strategy, TrainConfig};

fn main() -> icla::Result<()> {
    let protocol = Protocol::Blobs3T;
    let stream = protocol.build_stream(&StreamOptions { run_seed: 1, ..Default::default() })?;
    let arch = protocol.default_arch();

    let mut cfg = TrainConfig { seed: 1, epochs_per_task: 20, pseudo_per_class: 200, ..Default::default() };
    cfg.adam.learning_rate = 0.01;

    println!("{} tasks, classes per task: 2, input dim {}", stream.num_tasks(), stream.input_dim);
    for strategy in [Strategy::Naive, Strategy::Icla] {
        let result = run_strategy(&stream, &arch, strategy, cfg.clone(), &mut NullObserver)?;
        println!("\n{strategy} — accuracy on each task's test split as training advances:");
        for horizon in 1..=stream.num_tasks() {
            let row: Vec<String> = (1..=horizon)
                .map(|t| {
                    let acc = result.curve.accuracy_at(t, horizon).unwrap();
                    format!("task{t} {acc:.3}")
                })
                .collect();
            println!("  after task {horizon}: {}", row.join("  "));
        }
        let t1 = result.curve.accuracy_at(1, stream.num_tasks()).unwrap();
        println!("  final accuracy on task 1: {t1:.3}");
    }
    Ok(())
}
