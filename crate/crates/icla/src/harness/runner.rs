//! Multi-seed experiment execution and the on-disk layout of a run
//! directory.
//!
//! Layout of `<output_dir>/<protocol>-<strategy>-<hash12>/`:
//!
//! ```text
//! config.toml                    resolved configuration (canonical form)
//! curve_seed<S>.csv              learning curve, one row per (task, epoch)
//! timing_seed<S>.csv             wall-clock sidecar for the same rows
//! aggregate.csv                  across-seed mean/std once every seed ends
//! checkpoints/seed<S>/
//!     net_latest.bin             network + optimizer after the last task
//!     gmm_task<T>.bin            per-task mixture (generative runs)
//!     embed_task<T>.csv          task T's test embeddings at end of task T
//!     progress.txt               number of completed tasks
//! ```
//!
//! Seeds run in parallel; failures are reported for the smallest failing
//! seed so reruns are deterministic.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::checkpoint::{load_mixture, load_network, save_mixture, save_network};
use crate::data::protocols::Protocol;
use crate::data::TaskStream;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::curve::{aggregate, Aggregate, CurveRow, LearningCurve};
use crate::harness::dump::write_embeddings;
use crate::trainer::{ContinualRun, RunObserver, Strategy, TaskEnd};

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub run_dir: PathBuf,
    /// (seed, stitched curve) in config order.
    pub curves: Vec<(u64, LearningCurve)>,
    pub aggregate: Aggregate,
}

/// Per-seed file locations inside a run directory.
pub struct SeedPaths {
    pub curve: PathBuf,
    pub timing: PathBuf,
    pub checkpoints: PathBuf,
}

impl SeedPaths {
    pub fn new(run_dir: &Path, seed: u64) -> SeedPaths {
        SeedPaths {
            curve: run_dir.join(format!("curve_seed{seed}.csv")),
            timing: run_dir.join(format!("timing_seed{seed}.csv")),
            checkpoints: run_dir.join("checkpoints").join(format!("seed{seed}")),
        }
    }

    pub fn network(&self) -> PathBuf {
        self.checkpoints.join("net_latest.bin")
    }

    pub fn mixture(&self, task: usize) -> PathBuf {
        self.checkpoints.join(format!("gmm_task{task}.bin"))
    }

    pub fn embeddings(&self, task: usize) -> PathBuf {
        self.checkpoints.join(format!("embed_task{task}.csv"))
    }

    pub fn progress(&self) -> PathBuf {
        self.checkpoints.join("progress.txt")
    }

    pub fn read_progress(&self) -> Result<usize> {
        let p = self.progress();
        if !p.exists() {
            return Ok(0);
        }
        let text = fs::read_to_string(&p)?;
        text.trim()
            .parse::<usize>()
            .map_err(|e| Error::Data(format!("corrupt progress file {}: {e}", p.display())))
    }
}

/// Streams rows and checkpoints to disk as training proceeds, so a killed
/// run can resume from its last finished task.
struct SeedObserver {
    paths: SeedPaths,
    num_tasks: usize,
    rows: Vec<CurveRow>,
}

impl SeedObserver {
    fn curve(&self) -> LearningCurve {
        LearningCurve { num_tasks: self.num_tasks, rows: self.rows.clone() }
    }

    fn flush_csvs(&self) -> Result<()> {
        let curve = self.curve();
        let mut w = BufWriter::new(fs::File::create(&self.paths.curve)?);
        curve.write_csv(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(&self.paths.timing)?);
        curve.write_timing_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

impl RunObserver for SeedObserver {
    fn on_epoch(&mut self, row: &CurveRow) -> Result<()> {
        self.rows.push(row.clone());
        self.flush_csvs()
    }

    fn on_task_end(&mut self, event: TaskEnd<'_>) -> Result<()> {
        save_network(event.params, Some(event.adam), &self.paths.network())?;
        if let Some(gmm) = event.gmm {
            save_mixture(gmm, &self.paths.mixture(event.task))?;
        }
        if let Some(batch) = event.test_embeddings {
            let mut w = BufWriter::new(fs::File::create(self.paths.embeddings(event.task))?);
            write_embeddings(&mut w, &[(event.task, batch)])?;
            w.flush()?;
        }
        // Progress advances only after every artifact of the task is on disk.
        fs::write(self.paths.progress(), format!("{}\n", event.task))?;
        Ok(())
    }
}

/// Runs every seed of the experiment and writes the run directory. Existing
/// results are overwritten unless `resume` is set, in which case each seed
/// picks up after its last completed task.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let protocol = cfg.protocol()?;
    let strategy = cfg.strategy()?;
    let arch = cfg.arch()?;
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir)?;
    fs::write(run_dir.join("config.toml"), cfg.canonical_toml())?;

    // Data-backed protocols are identical for every seed (protocol-level
    // randomness has its own seed), so the stream is built once and shared.
    // Blob protocols draw fresh data per run seed.
    let shared: Option<TaskStream> =
        if protocol.dataset().is_some() { Some(protocol.build_stream(&cfg.stream_options(0))?) } else { None };

    let results: Vec<(u64, Result<LearningCurve>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let out = match &shared {
                Some(stream) => run_one_seed(cfg, protocol, &arch.clone(), strategy, stream, seed, &run_dir),
                None => match protocol.build_stream(&cfg.stream_options(seed)) {
                    Ok(stream) => run_one_seed(cfg, protocol, &arch.clone(), strategy, &stream, seed, &run_dir),
                    Err(e) => Err(e),
                },
            };
            (seed, out)
        })
        .collect();

    let mut curves = Vec::with_capacity(results.len());
    for (seed, r) in results {
        match r {
            Ok(c) => curves.push((seed, c)),
            Err(e) => return Err(e),
        }
    }

    let bare: Vec<LearningCurve> = curves.iter().map(|(_, c)| c.clone()).collect();
    let agg = aggregate(&bare)?;
    let mut w = BufWriter::new(fs::File::create(run_dir.join("aggregate.csv"))?);
    agg.write_csv(&mut w)?;
    w.flush()?;

    Ok(ExperimentOutcome { run_dir, curves, aggregate: agg })
}

fn run_one_seed(
    cfg: &ExperimentConfig,
    protocol: Protocol,
    arch: &crate::model::NetworkArch,
    strategy: Strategy,
    stream: &TaskStream,
    seed: u64,
    run_dir: &Path,
) -> Result<LearningCurve> {
    let _ = protocol;
    let paths = SeedPaths::new(run_dir, seed);
    fs::create_dir_all(&paths.checkpoints)?;
    let train = cfg.train_config(seed)?;

    let (mut run, prior_rows) = if cfg.resume {
        let completed = paths.read_progress()?.min(stream.num_tasks());
        if completed == 0 {
            (ContinualRun::new(stream, arch, strategy, train)?, Vec::new())
        } else {
            let (params, adam) = load_network(&paths.network())?;
            let adam = adam.ok_or_else(|| {
                Error::Data(format!("checkpoint {} lacks optimizer state", paths.network().display()))
            })?;
            let gmm = if strategy == Strategy::Icla {
                Some(load_mixture(&paths.mixture(completed))?)
            } else {
                None
            };
            let run = ContinualRun::resume(stream, strategy, train, completed, params, adam, gmm)?;
            let prior = read_prior_rows(&paths.curve, completed)?;
            if completed >= stream.num_tasks() {
                // Nothing left to train; reuse the stored curve as-is.
                return Ok(LearningCurve { num_tasks: stream.num_tasks(), rows: prior });
            }
            (run, prior)
        }
    } else {
        // A fresh run must not inherit a stale progress marker from an
        // earlier, interrupted attempt.
        let p = paths.progress();
        if p.exists() {
            fs::remove_file(&p)?;
        }
        (ContinualRun::new(stream, arch, strategy, train)?, Vec::new())
    };

    let mut observer =
        SeedObserver { paths, num_tasks: stream.num_tasks(), rows: prior_rows };
    while !run.is_done(stream) {
        run.train_next_task(stream, &mut observer)?;
    }
    observer.flush_csvs()?;
    Ok(observer.curve())
}

/// Rows already earned by completed tasks, from the previous curve file.
fn read_prior_rows(curve_path: &Path, completed: usize) -> Result<Vec<CurveRow>> {
    if !curve_path.exists() {
        return Err(Error::Data(format!(
            "resume found progress but no curve file at {}",
            curve_path.display()
        )));
    }
    let file = fs::File::open(curve_path)?;
    let curve = LearningCurve::read_csv(std::io::BufReader::new(file))?;
    Ok(curve.rows.into_iter().filter(|r| r.task <= completed).collect())
}
