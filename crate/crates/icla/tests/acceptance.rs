//! Acceptance gate: every promised behavior of the crate, each checked at
//! its stated tolerance and runtime budget, one verdict line per criterion
//! (visible with `--nocapture`; always shown on failure).
//!
//! Criteria 5–7 exercise MNIST-scale protocols and are `#[ignore]`d by
//! default; run them with `cargo test --test acceptance -- --ignored` after
//! pointing `ICLA_DATA_DIR` at a directory holding the IDX files (see
//! scripts/fetch_mnist.sh). Without the data they announce SKIP and assert
//! nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

use icla::data::protocols::{Protocol, StreamOptions};
use icla::gmm::{GaussianMixture, GmmConfig};
use icla::harness::config::DATA_DIR_ENV;
use icla::harness::dump::embed_test_sets;
use icla::harness::{audit_run_dir, run_experiment, ExperimentConfig, SeedPaths};
use icla::model::{EmbeddingBatch, NetworkArch, NetworkParams};
use icla::nn::gradcheck::{max_relative_error, relu_kink_margin, DEFAULT_STEP};
use icla::nn::Matrix;
use icla::seed;
use icla::swd::{swd2, SwdConfig};
use icla::trainer::{
    combined_loss, replay_loss, run_strategy, NullObserver, ReplayBatch, Strategy, TrainConfig,
};

fn verdict(criterion: usize, name: &str, pass: bool, detail: &str, secs: f64, budget: f64) {
    let state = if pass && secs < budget { "PASS" } else { "FAIL" };
    println!("criterion {criterion} ({name}): {state} — {detail} [{secs:.1}s / {budget:.0}s]");
    assert!(pass, "criterion {criterion} ({name}): {detail}");
    assert!(secs < budget, "criterion {criterion} ({name}): took {secs:.1}s, budget {budget:.0}s");
}

fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

fn skip(criterion: usize, name: &str) {
    println!(
        "criterion {criterion} ({name}): SKIP — {DATA_DIR_ENV} not set, criterion not evaluated"
    );
}

fn uniform_batch<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Matrix {
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

// --- 1: analytic gradients of both objectives vs central differences ------

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    // A step below the library default keeps the kink-margin requirement
    // (100·h) satisfiable for wide architectures: the smallest |ReLU
    // pre-activation| across a 3×50-unit net is routinely ~1e-4, which is a
    // hundred probe steps away at h = 1e-6 and still far above roundoff.
    let h = DEFAULT_STEP / 10.0;

    for case in 0..20u64 {
        // ≤ 3 hidden layers and ≤ 50 hidden units per network; probing every
        // parameter coordinate is quadratic in network size, so the unit
        // budget is what keeps twenty architectures inside the time budget.
        let mut arch_rng = seed::rng_for(900, "init", case);
        let layers = arch_rng.random_range(1..=3usize);
        let cap = 50 / layers;
        let hidden: Vec<usize> = (0..layers).map(|_| arch_rng.random_range(2..=cap)).collect();
        let input_dim = arch_rng.random_range(2..=8);
        let embedding = arch_rng.random_range(2..=12);
        let classes = arch_rng.random_range(2..=4);
        let arch = NetworkArch::small(input_dim, hidden, embedding);

        // Central differences lie near a ReLU kink, so redraw (deterministic
        // salt sequence) until every unit clears the probe step comfortably.
        let mut salt = 0u64;
        let (mut params, x, y, rx, rz, rl) = loop {
            let mut rng = seed::rng_for(1000 + case, "init", salt);
            let params = NetworkParams::new_seeded(&arch, classes, &mut rng);
            let n = rng.random_range(4..=6);
            let x = uniform_batch(&mut rng, n, input_dim);
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let rx = uniform_batch(&mut rng, n, input_dim);
            let rz = uniform_batch(&mut rng, n, embedding);
            let rl: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            if relu_kink_margin(&params, &[&x, &rx]) > 100.0 * h {
                break (params, x, y, rx, rz, rl);
            }
            salt += 1;
            assert!(salt < 10_000, "case {case}: no draw cleared the kink margin");
        };
        let targets = onehot(&y, classes);

        let (_, grads) = combined_loss(&params, &x, &targets, 0.8).unwrap();
        let err = max_relative_error(
            &mut params,
            &grads,
            |p| combined_loss(p, &x, &targets, 0.8).unwrap().0,
            h,
        );
        worst = worst.max(err);

        let replay = ReplayBatch {
            inputs: &rx,
            onehot: &onehot(&rl, classes),
            labels: &rl,
            targets: Some(&rz),
        };
        let align: BTreeSet<usize> = rl.iter().copied().collect();
        let swd = SwdConfig { projections: 30, seed: 17 + case };
        let (_, grads, _) =
            replay_loss(&params, &x, &targets, &replay, 0.8, 0.3, &align, &swd).unwrap();
        let err = max_relative_error(
            &mut params,
            &grads,
            |p| replay_loss(p, &x, &targets, &replay, 0.8, 0.3, &align, &swd).unwrap().0,
            h,
        );
        worst = worst.max(err);
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "gradient correctness",
        worst < 1e-4,
        &format!("20 architectures, both objectives, worst relative error {worst:.2e} < 1e-4"),
        secs,
        10.0,
    );
}

// --- 2: sliced distance equals the exact 1D answer; metric sanity ---------

#[test]
fn criterion_2_swd_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = seed::rng_for(901, "init", 0);
    let cfg = SwdConfig { projections: 64, seed: 3 };

    // In one dimension every projection sees the same values up to sign, so
    // the sliced average must equal the sorted-pairing answer computed here.
    let mut worst_1d = 0.0_f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=64);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let ma = Matrix::from_rows(&a.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        let mb = Matrix::from_rows(&b.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        let (sliced, _) = swd2(&ma, &mb, &cfg).unwrap();
        let mut sa = a;
        let mut sb = b;
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        let exact =
            sa.iter().zip(&sb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / sa.len() as f64;
        worst_1d = worst_1d.max((sliced - exact).abs());
    }

    let mut nonneg = true;
    let mut worst_identity = 0.0_f64;
    for i in 0..1000u64 {
        let dim = rng.random_range(2..=8);
        let (nx, ny) = (rng.random_range(1..=24), rng.random_range(1..=24));
        let x = uniform_batch(&mut rng, nx, dim);
        let y = uniform_batch(&mut rng, ny, dim);
        let pair_cfg = SwdConfig { projections: 16, seed: i };
        let (d, _) = swd2(&x, &y, &pair_cfg).unwrap();
        nonneg &= d >= 0.0;
        let (z, _) = swd2(&x, &x, &pair_cfg).unwrap();
        worst_identity = worst_identity.max(z.abs());
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "swd oracle equivalence",
        worst_1d <= 1e-9 && nonneg && worst_identity <= 1e-12,
        &format!(
            "100 1D cases worst |diff| {worst_1d:.2e} <= 1e-9; 1000 multi-dim cases nonneg {nonneg}, worst self-distance {worst_identity:.2e}"
        ),
        secs,
        5.0,
    );
}

// --- 3: mixture estimation matches hand arithmetic, recovers a truth ------

#[test]
fn criterion_3_gmm_exactness_and_recovery() {
    let start = Instant::now();
    let ridge = GmmConfig::default().ridge;

    // Three points, two classes: every fitted quantity is hand-computable.
    let batch = EmbeddingBatch::new(
        Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]]),
        vec![0, 0, 1],
    );
    let gmm = GaussianMixture::fit_map(&batch, &GmmConfig::default()).unwrap();
    let c0 = &gmm.components[0];
    let c1 = &gmm.components[1];
    // Class 0: mean (1,0); centered points (-1,0),(1,0) give scatter/2 =
    // [[1,0],[0,0]]; the ridge lands on the diagonal. Weight 2/3.
    let mut worst = (c0.weight - 2.0 / 3.0).abs();
    worst = worst.max((c0.mean[0] - 1.0).abs()).max(c0.mean[1].abs());
    worst = worst.max((c0.covariance.get(0, 0) - (1.0 + ridge)).abs());
    worst = worst.max(c0.covariance.get(0, 1).abs()).max(c0.covariance.get(1, 0).abs());
    worst = worst.max((c0.covariance.get(1, 1) - ridge).abs());
    // Class 1: a single point has zero scatter; only the ridge remains.
    worst = worst.max((c1.weight - 1.0 / 3.0).abs());
    worst = worst.max((c1.mean[0] - 1.0).abs()).max((c1.mean[1] - 3.0).abs());
    worst = worst.max((c1.covariance.get(0, 0) - ridge).abs());
    worst = worst.max((c1.covariance.get(1, 1) - ridge).abs());
    worst = worst.max(c1.covariance.get(0, 1).abs()).max(c1.covariance.get(1, 0).abs());
    let fixture_ok = worst <= 1e-12;

    // Sample a known two-component mixture, fit, and read the truth back.
    let truth = [([0.0_f64, 0.0], 0.5_f64, 3000usize), ([3.0, 1.0], 0.9, 2000)];
    let mut rng = seed::rng_for(902, "blob-data", 0);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (class, (mean, sd, count)) in truth.iter().enumerate() {
        let n = Normal::new(0.0, *sd).unwrap();
        for _ in 0..*count {
            rows.push(vec![mean[0] + n.sample(&mut rng), mean[1] + n.sample(&mut rng)]);
            labels.push(class);
        }
    }
    let fitted =
        GaussianMixture::fit_map(&EmbeddingBatch::new(Matrix::from_rows(&rows), labels), &GmmConfig::default())
            .unwrap();
    let mut mean_err = 0.0_f64;
    let mut weight_err = 0.0_f64;
    for (c, (mean, _, count)) in fitted.components.iter().zip(&truth) {
        let d = ((c.mean[0] - mean[0]).powi(2) + (c.mean[1] - mean[1]).powi(2)).sqrt();
        mean_err = mean_err.max(d);
        weight_err = weight_err.max((c.weight - *count as f64 / 5000.0).abs());
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "gmm exactness and recovery",
        fixture_ok && mean_err < 0.05 && weight_err < 0.02,
        &format!(
            "fixture worst |diff| {worst:.2e} <= 1e-12; n=5000 recovery mean error {mean_err:.3} < 0.05, weight error {weight_err:.3} < 0.02"
        ),
        secs,
        5.0,
    );
}

// --- 4: the forgetting control on blobs, five seeds -----------------------

fn blob_train_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig { seed, epochs_per_task: 20, ..TrainConfig::default() };
    cfg.adam.learning_rate = 0.01;
    cfg
}

#[test]
fn criterion_4_blob_forgetting_control() {
    let start = Instant::now();
    let protocol = Protocol::Blobs3T;
    let arch = protocol.default_arch();

    let mut task1: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seed in 1..=5u64 {
        let stream = protocol
            .build_stream(&StreamOptions { run_seed: seed, ..Default::default() })
            .unwrap();
        for strategy in [Strategy::Naive, Strategy::Icla, Strategy::FullReplay] {
            let result =
                run_strategy(&stream, &arch, strategy, blob_train_config(seed), &mut NullObserver)
                    .unwrap();
            let acc = result.curve.accuracy_at(1, 3).unwrap();
            task1.entry(match strategy {
                Strategy::Naive => "naive",
                Strategy::Icla => "icla",
                _ => "fr",
            })
            .or_default()
            .push(acc);
        }
    }
    let mean = |k: &str| {
        let v = &task1[k];
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (naive, icla, fr) = (mean("naive"), mean("icla"), mean("fr"));

    let secs = start.elapsed().as_secs_f64();
    verdict(
        4,
        "blob forgetting control",
        naive < 0.60 && icla >= 0.90 && fr >= icla - 0.01,
        &format!(
            "5-seed mean task-1 accuracy after task 3: naive {naive:.3} < 0.60, icla {icla:.3} >= 0.90, fr {fr:.3} >= icla - 0.01"
        ),
        secs,
        120.0,
    );
}

// --- 5: dataset-scale accuracy floors (opt-in) ----------------------------

#[test]
#[ignore = "needs MNIST IDX files (ICLA_DATA_DIR) and ~45 minutes; run with --ignored"]
fn criterion_5_split_mnist_accuracy_floors() {
    let Some(root) = data_root() else {
        skip(5, "split-mnist accuracy floors");
        return;
    };
    let start = Instant::now();

    let mut finals: BTreeMap<&str, f64> = BTreeMap::new();
    for (protocol, floor) in [(Protocol::Mnist5T, 0.85), (Protocol::Mnist2T, 0.92)] {
        let stream = protocol
            .build_stream(&StreamOptions { data_dir: Some(root.clone()), ..Default::default() })
            .unwrap();
        let arch = protocol.default_arch();
        let mut accs = Vec::new();
        for seed in 1..=5u64 {
            let cfg = TrainConfig { seed, ..TrainConfig::default() };
            let result =
                run_strategy(&stream, &arch, Strategy::Icla, cfg, &mut NullObserver).unwrap();
            accs.push(result.curve.final_cumulative().unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        finals.insert(if matches!(protocol, Protocol::Mnist5T) { "5T" } else { "2T" }, mean);
        assert!(
            mean >= floor,
            "criterion 5: {protocol} 5-seed mean final accuracy {mean:.4} below floor {floor}"
        );
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        5,
        "split-mnist accuracy floors",
        true,
        &format!("5-seed mean final accuracy: 5T {:.4} >= 0.85, 2T {:.4} >= 0.92", finals["5T"], finals["2T"]),
        secs,
        2700.0,
    );
}

// --- 6: the stored-buffer baseline falls further behind over time (opt-in) -

#[test]
#[ignore = "needs MNIST IDX files (ICLA_DATA_DIR) and ~90 minutes; run with --ignored"]
fn criterion_6_buffer_gap_grows_with_tasks() {
    let Some(root) = data_root() else {
        skip(6, "buffer gap growth");
        return;
    };
    let start = Instant::now();

    let protocol = Protocol::Mnist9T;
    let stream = protocol
        .build_stream(&StreamOptions { data_dir: Some(root), ..Default::default() })
        .unwrap();
    let arch = protocol.default_arch();
    let mut cum: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for strategy in [Strategy::Icla, Strategy::MemoryBuffer] {
        let cfg = TrainConfig { seed: 1, buffer_capacity: 100, ..TrainConfig::default() };
        let result = run_strategy(&stream, &arch, strategy, cfg, &mut NullObserver).unwrap();
        let at = |h: usize| {
            result
                .curve
                .rows
                .iter()
                .filter(|r| r.task == h)
                .next_back()
                .map(|r| r.cumulative_accuracy)
                .unwrap()
        };
        cum.insert(
            if matches!(strategy, Strategy::Icla) { "icla" } else { "mb" },
            (at(3), at(9)),
        );
    }
    let gap3 = cum["icla"].0 - cum["mb"].0;
    let gap9 = cum["icla"].1 - cum["mb"].1;

    let secs = start.elapsed().as_secs_f64();
    verdict(
        6,
        "buffer gap growth",
        gap9 > gap3,
        &format!("icla-vs-buffer cumulative gap at task 9 ({gap9:.4}) exceeds task 3 ({gap3:.4})"),
        secs,
        5400.0,
    );
}

// --- 7: drift protocol floors plus one embedding cluster per class (opt-in)

#[test]
#[ignore = "needs MNIST IDX files (ICLA_DATA_DIR) and ~20 minutes; run with --ignored"]
fn criterion_7_permuted_drift_and_cluster_unity() {
    let Some(root) = data_root() else {
        skip(7, "permuted drift and cluster unity");
        return;
    };
    let start = Instant::now();

    let protocol = Protocol::Permuted { tasks: 3 };
    let stream = protocol
        .build_stream(&StreamOptions {
            data_dir: Some(root),
            data_fraction: 0.1,
            ..Default::default()
        })
        .unwrap();
    let arch = protocol.default_arch();

    let naive = run_strategy(
        &stream,
        &arch,
        Strategy::Naive,
        TrainConfig { seed: 1, ..TrainConfig::default() },
        &mut NullObserver,
    )
    .unwrap();
    let icla = run_strategy(
        &stream,
        &arch,
        Strategy::Icla,
        TrainConfig { seed: 1, ..TrainConfig::default() },
        &mut NullObserver,
    )
    .unwrap();
    let naive_final = naive.curve.final_cumulative().unwrap();
    let icla_final = icla.curve.final_cumulative().unwrap();

    // One cluster per class across tasks: each task-conditional class
    // centroid must sit closer to its class mean than any two class means
    // sit to each other.
    let groups = embed_test_sets(&icla.params, &stream).unwrap();
    let dim = groups[0].1.dim();
    let mut per: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for (task, batch) in &groups {
        for (i, &label) in batch.labels.iter().enumerate() {
            let e = per.entry((label, *task)).or_insert_with(|| (vec![0.0; dim], 0));
            for (a, &v) in e.0.iter_mut().zip(&batch.points.data()[i * dim..(i + 1) * dim]) {
                *a += v;
            }
            e.1 += 1;
        }
    }
    let mut class_centroids: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for ((label, _), (sum, count)) in per {
        class_centroids
            .entry(label)
            .or_default()
            .push(sum.iter().map(|v| v / count as f64).collect());
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut class_means: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut within = 0.0_f64;
    for (&label, cents) in &class_centroids {
        let mut m = vec![0.0; dim];
        for c in cents {
            for (a, v) in m.iter_mut().zip(c) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= cents.len() as f64);
        for c in cents {
            within = within.max(dist(c, &m));
        }
        class_means.insert(label, m);
    }
    let mut between = f64::INFINITY;
    let keys: Vec<usize> = class_means.keys().copied().collect();
    for i in 0..keys.len() {
        for j in i + 1..keys.len() {
            between = between.min(dist(&class_means[&keys[i]], &class_means[&keys[j]]));
        }
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        7,
        "permuted drift and cluster unity",
        icla_final >= 0.75 && naive_final < 0.50 && between > within,
        &format!(
            "final accuracy icla {icla_final:.3} >= 0.75, naive {naive_final:.3} < 0.50; class centroids: min between {between:.3} > max within {within:.3}"
        ),
        secs,
        1200.0,
    );
}

// --- 8: the audit reproduces monotone forgetting and builds cleanly -------

#[test]
fn criterion_8_forgetting_audit() {
    let start = Instant::now();
    let tmp = TempDir::new().unwrap();

    let base = ExperimentConfig {
        protocol: "blobs3T".to_string(),
        seeds: vec![1],
        epochs_per_task: 20,
        learning_rate: 0.01,
        output_dir: tmp.path().to_string_lossy().into_owned(),
        ..ExperimentConfig::default()
    };

    // Naive control: error on every old task never recovers as the horizon
    // grows (within two points of noise).
    let naive_cfg = ExperimentConfig { strategy: "naive".to_string(), ..base.clone() };
    let naive_dir = run_experiment(&naive_cfg).unwrap().run_dir;
    let naive = audit_run_dir(&naive_dir, 1).unwrap();
    let mut monotone = true;
    for task in 1..=3 {
        let errs: Vec<f64> = naive.task_rows(task).iter().map(|r| r.error).collect();
        monotone &= errs.windows(2).all(|w| w[1] >= w[0] - 0.02);
    }
    let error_only =
        naive.rows.iter().all(|r| r.swd_fit.is_none() && r.swd_drift_sum.is_none());

    // The generative run's report must assemble every term without error.
    let icla_cfg = ExperimentConfig { strategy: "icla".to_string(), ..base };
    let icla_dir = run_experiment(&icla_cfg).unwrap().run_dir;
    let icla = audit_run_dir(&icla_dir, 1).unwrap();
    let complete =
        icla.rows.iter().all(|r| r.swd_fit.is_some() && r.swd_drift_sum.is_some());

    let secs = start.elapsed().as_secs_f64();
    verdict(
        8,
        "forgetting audit",
        monotone && error_only && complete,
        &format!(
            "naive errors non-decreasing within 0.02 across horizons ({monotone}); naive rows error-only ({error_only}); generative report complete ({complete})"
        ),
        secs,
        120.0,
    );
}

// --- 9: identical config and seeds reproduce the curves bit for bit -------

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let tmp_a = TempDir::new().unwrap();
    let tmp_b = TempDir::new().unwrap();

    let cfg = |out: &std::path::Path| ExperimentConfig {
        protocol: "blobs3T".to_string(),
        strategy: "icla".to_string(),
        seeds: vec![1, 2],
        epochs_per_task: 6,
        learning_rate: 0.01,
        output_dir: out.to_string_lossy().into_owned(),
        ..ExperimentConfig::default()
    };
    let a = run_experiment(&cfg(tmp_a.path())).unwrap();
    let b = run_experiment(&cfg(tmp_b.path())).unwrap();

    let mut identical = true;
    for seed in [1u64, 2] {
        let ca = std::fs::read(SeedPaths::new(&a.run_dir, seed).curve).unwrap();
        let cb = std::fs::read(SeedPaths::new(&b.run_dir, seed).curve).unwrap();
        identical &= ca == cb;
    }
    let agg_a = std::fs::read(a.run_dir.join("aggregate.csv")).unwrap();
    let agg_b = std::fs::read(b.run_dir.join("aggregate.csv")).unwrap();
    identical &= agg_a == agg_b;

    let secs = start.elapsed().as_secs_f64();
    verdict(
        9,
        "determinism",
        identical,
        "re-run with identical config and seeds: per-seed curve CSVs and aggregate bitwise identical",
        secs,
        120.0,
    );
}
