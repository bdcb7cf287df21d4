//! Concept drift: old classes reappear in later tasks with shifted inputs.
//! Replay from the mixture adapts the old concept instead of fragmenting it.
//!
//! Run with: cargo run --release --example drifting_concepts

use icla::data::protocols::{Protocol, StreamOptions};
use icla::trainer::{run_strategy, NullObserver, Strategy, TrainConfig};

fn main() -> icla::Result<()> {
    let protocol = Protocol::BlobsDrift;
    let stream = protocol.build_stream(&StreamOptions { run_seed: 5, ..Default::default() })?;

    for task in &stream.tasks {
        println!(
            "task {}: new classes {:?}, returning classes {:?}",
            task.index, task.new_classes, task.old_classes
        );
    }

    let mut cfg = TrainConfig { seed: 5, epochs_per_task: 20, pseudo_per_class: 200, ..Default::default() };
    cfg.adam.learning_rate = 0.01;
    let arch = protocol.default_arch();
    for strategy in [Strategy::Naive, Strategy::Icla] {
        let result = run_strategy(&stream, &arch, strategy, cfg.clone(), &mut NullObserver)?;
        let t = stream.num_tasks();
        print!("{strategy}: final per-task accuracy");
        for task in 1..=t {
            print!("  task{task} {:.3}", result.curve.accuracy_at(task, t).unwrap());
        }
        println!("  (cumulative {:.3})", result.curve.final_cumulative().unwrap());
    }
    Ok(())
}
