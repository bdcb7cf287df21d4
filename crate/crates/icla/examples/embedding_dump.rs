//! Dump test-set embeddings after continual training and measure how
//! cleanly the classes separate into one cluster each.
//!
//! Run with: cargo run --release --example embedding_dump

use icla::data::protocols::{Protocol, StreamOptions};
use icla::harness::dump::{embed_test_sets, write_embeddings};
use icla::trainer::{run_strategy, NullObserver, Strategy, TrainConfig};

fn main() -> icla::Result<()> {
    let protocol = Protocol::Blobs3T;
    let stream = protocol.build_stream(&StreamOptions { run_seed: 2, ..Default::default() })?;

    let mut cfg = TrainConfig { seed: 2, epochs_per_task: 20, pseudo_per_class: 200, ..Default::default() };
    cfg.adam.learning_rate = 0.01;
    let result =
        run_strategy(&stream, &protocol.default_arch(), Strategy::Icla, cfg, &mut NullObserver)?;

    let groups = embed_test_sets(&result.params, &stream)?;
    let refs: Vec<_> = groups.iter().map(|(t, b)| (*t, b)).collect();
    let mut csv = Vec::new();
    write_embeddings(&mut csv, &refs)?;
    let text = String::from_utf8(csv).unwrap();
    println!("CSV head:");
    for line in text.lines().take(4) {
        println!("  {line}");
    }
    println!("  ... {} rows total", text.lines().count() - 2);

    // One centroid per class; separation = smallest centroid gap over the
    // largest within-class spread. Values well above 1 mean tight,
    // non-overlapping clusters.
    let mut by_class: std::collections::BTreeMap<usize, Vec<&[f64]>> = Default::default();
    let dim = groups[0].1.dim();
    for (_, batch) in &groups {
        for (i, &label) in batch.labels.iter().enumerate() {
            by_class.entry(label).or_default().push(&batch.points.data()[i * dim..(i + 1) * dim]);
        }
    }
    let centroids: Vec<(usize, Vec<f64>)> = by_class
        .iter()
        .map(|(&c, pts)| {
            let mut m = vec![0.0; dim];
            for p in pts {
                for (mi, v) in m.iter_mut().zip(*p) {
                    *mi += v;
                }
            }
            m.iter_mut().for_each(|v| *v /= pts.len() as f64);
            (c, m)
        })
        .collect();

    let spread = by_class
        .iter()
        .zip(&centroids)
        .map(|((_, pts), (_, m))| {
            let var: f64 = pts
                .iter()
                .map(|p| p.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum::<f64>()
                / pts.len() as f64;
            var.sqrt()
        })
        .fold(0.0f64, f64::max);
    let mut min_gap = f64::INFINITY;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            let d: f64 = centroids[i]
                .1
                .iter()
                .zip(&centroids[j].1)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            min_gap = min_gap.min(d.sqrt());
        }
    }
    println!("classes: {}", centroids.len());
    println!("smallest centroid gap {min_gap:.3}, largest within-class spread {spread:.3}");
    println!("separation ratio {:.2}", min_gap / spread);
    Ok(())
}
