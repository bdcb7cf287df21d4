//! Generate a pseudo-dataset for past classes: sample the mixture, decode,
//! and keep only samples the classifier still recognizes confidently.
//!
//! Run with: cargo run --release --example pseudo_rehearsal

use icla::data::protocols::{Protocol, StreamOptions};
use icla::replay::{generate_pseudo, ReplayConfig};
use icla::seed;
use icla::trainer::{ContinualRun, NullObserver, Strategy, TrainConfig};

fn main() -> icla::Result<()> {
    let protocol = Protocol::Blobs2T;
    let stream = protocol.build_stream(&StreamOptions { run_seed: 3, ..Default::default() })?;

    let mut cfg = TrainConfig { seed: 3, epochs_per_task: 20, ..Default::default() };
    cfg.adam.learning_rate = 0.01;
    let mut run = ContinualRun::new(&stream, &protocol.default_arch(), Strategy::Icla, cfg)?;
    run.train_next_task(&stream, &mut NullObserver)?;
    let gmm = run.gmm.as_ref().expect("the generative strategy fits a mixture after each task");

    // Loosening tau trades purity for yield; the filter also drops decoded
    // samples whose argmax wandered to another class.
    for tau in [0.0, 0.5, 0.9, 0.99] {
        let mut rng = seed::rng_for(3, "pseudo", 2);
        let pseudo = generate_pseudo(
            gmm,
            &run.params,
            &run.head_slots,
            &ReplayConfig { per_class: 300, tau, max_attempts: 6000, require_argmax: true },
            &mut rng,
        )?;
        println!("tau {tau:.2}: {} samples kept", pseudo.len());
        for a in &pseudo.acceptance {
            println!(
                "  class {}: accepted {}/{} draws ({:.0}%)",
                a.class,
                a.accepted,
                a.attempted,
                100.0 * a.rate()
            );
        }
    }
    Ok(())
}
