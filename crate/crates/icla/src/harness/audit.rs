//! Forgetting audit: measured error on old tasks next to the
//! distribution-level quantities that drive it.
//!
//! For every task `t` observed at a horizon `T >= t`, the report pairs the
//! measured test error on `t` with two sliced-Wasserstein estimates:
//!
//! * `swd_fit` — distance between task `t`'s test embeddings (snapshotted at
//!   the end of task `t`) and samples from the mixture fit at that time,
//!   restricted to `t`'s classes. How faithful the generative stand-in was
//!   on day one.
//! * `swd_drift_sum` — accumulated distance between successive mixture
//!   checkpoints restricted to `t`'s classes, summed over `s = t .. T-2`.
//!   How far the stand-in wandered while later tasks trained. The sum gains
//!   a term per horizon step, so it can only widen; a healthy run shows the
//!   error climbing much slower than the sum accumulates.
//!
//! Both columns are estimates from `AUDIT_PROJECTIONS` random slices and
//! balanced mixture samples, not exact Wasserstein values. Strategies that
//! keep no mixture checkpoints (everything except `icla`) get error-only
//! rows. Everything is read back from a finished run directory, so the audit
//! can run long after the experiment, on any seed the run covered.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::checkpoint::load_mixture;
use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::harness::config::ExperimentConfig;
use crate::harness::curve::{fmt_f64, LearningCurve};
use crate::harness::dump::read_embeddings;
use crate::harness::runner::SeedPaths;
use crate::seed;
use crate::swd::{swd2, SwdConfig};
use crate::trainer::Strategy;

/// Projection count for the audit's distance estimates.
pub const AUDIT_PROJECTIONS: usize = 200;
/// Mixture draws per class when a term needs samples.
pub const AUDIT_SAMPLES_PER_CLASS: usize = 200;

const AUDIT_SCHEMA: &str = "# audit csv v1";

/// One (task, horizon) cell of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub task: usize,
    /// Number of tasks trained when the error was measured.
    pub horizon: usize,
    /// 1 - accuracy on `task`'s test split at the end of `horizon`.
    pub error: f64,
    pub swd_fit: Option<f64>,
    pub swd_drift_sum: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub seed: u64,
    pub strategy: Strategy,
    /// Ordered by task, then horizon.
    pub rows: Vec<AuditRow>,
}

impl AuditReport {
    /// Rows for a single task, in horizon order.
    pub fn task_rows(&self, task: usize) -> Vec<&AuditRow> {
        self.rows.iter().filter(|r| r.task == task).collect()
    }
}

/// Builds the report for one seed of a finished run directory.
pub fn audit_run_dir(dir: &Path, seed: u64) -> Result<AuditReport> {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    if !cfg.seeds.contains(&seed) {
        return Err(Error::Audit(format!(
            "seed {seed} is not part of this run (config lists {:?})",
            cfg.seeds
        )));
    }
    let strategy = cfg.strategy()?;
    let paths = SeedPaths::new(dir, seed);

    let curve = read_curve(&paths)?;
    let num_tasks = curve
        .rows
        .last()
        .map(|r| r.per_task.len())
        .ok_or_else(|| Error::Audit(format!("curve for seed {seed} has no rows")))?;

    let terms = match strategy {
        Strategy::Icla => Some(SwdTerms::measure(&paths, seed, num_tasks)?),
        _ => None,
    };

    let mut rows = Vec::new();
    for task in 1..=num_tasks {
        for horizon in task..=num_tasks {
            let acc = curve.accuracy_at(task, horizon).ok_or_else(|| {
                Error::Audit(format!(
                    "curve for seed {seed} has no accuracy for task {task} at horizon {horizon}"
                ))
            })?;
            let (swd_fit, swd_drift_sum) = match &terms {
                Some(t) => (Some(t.fit[task - 1]), Some(t.drift_sum(task, horizon))),
                None => (None, None),
            };
            rows.push(AuditRow { task, horizon, error: 1.0 - acc, swd_fit, swd_drift_sum });
        }
    }
    Ok(AuditReport { seed, strategy, rows })
}

fn read_curve(paths: &SeedPaths) -> Result<LearningCurve> {
    let f = File::open(&paths.curve).map_err(|e| {
        Error::Audit(format!("cannot open {}: {e}", paths.curve.display()))
    })?;
    LearningCurve::read_csv(BufReader::new(f))
}

/// The mixture-derived columns, measured once and shared across horizons.
struct SwdTerms {
    /// `fit[t-1]` = distance(task t snapshot embeddings, mixture at t).
    fit: Vec<f64>,
    /// `drift[t-1][k]` = distance between mixtures at s = t+k and t+k+1,
    /// both restricted to task t's classes.
    drift: Vec<Vec<f64>>,
}

impl SwdTerms {
    fn measure(paths: &SeedPaths, seed: u64, num_tasks: usize) -> Result<SwdTerms> {
        let mut mixtures = Vec::with_capacity(num_tasks);
        for t in 1..=num_tasks {
            mixtures.push(load_checkpoint_mixture(paths, t)?);
        }

        let mut fit = Vec::with_capacity(num_tasks);
        let mut drift = Vec::with_capacity(num_tasks);
        for task in 1..=num_tasks {
            let snapshot = load_snapshot(paths, task)?;
            let classes: BTreeSet<usize> = snapshot.labels.iter().copied().collect();

            // Fit term: the snapshot against the mixture of its own era.
            let mut rng = seed::rng_for(seed, "audit", (task as u64) << 32);
            let own = mixtures[task - 1].restrict(&classes)?;
            let draws = own.sample_balanced(AUDIT_SAMPLES_PER_CLASS, &mut rng);
            let cfg = SwdConfig { projections: AUDIT_PROJECTIONS, seed: rng.random() };
            fit.push(swd2(&snapshot.points, &draws.points, &cfg)?.0);

            // Drift terms: successive mixture pairs, same class restriction.
            let mut steps = Vec::new();
            for s in task..num_tasks {
                let mut rng = seed::rng_for(seed, "audit", ((task as u64) << 32) | s as u64);
                let before = mixtures[s - 1].restrict(&classes)?;
                let after = mixtures[s].restrict(&classes)?;
                let a = before.sample_balanced(AUDIT_SAMPLES_PER_CLASS, &mut rng);
                let b = after.sample_balanced(AUDIT_SAMPLES_PER_CLASS, &mut rng);
                let cfg = SwdConfig { projections: AUDIT_PROJECTIONS, seed: rng.random() };
                steps.push(swd2(&a.points, &b.points, &cfg)?.0);
            }
            drift.push(steps);
        }
        Ok(SwdTerms { fit, drift })
    }

    /// Sum of drift steps for `task` up to horizon `t_h`, i.e. over
    /// s = task .. t_h - 2 inclusive; empty when the horizon is the task's
    /// own era or the one right after.
    fn drift_sum(&self, task: usize, horizon: usize) -> f64 {
        let steps = &self.drift[task - 1];
        let take = (horizon + 1).saturating_sub(task + 2).min(steps.len());
        // + 0.0: an empty f64 Sum is -0.0, which would leak into the CSV.
        steps[..take].iter().sum::<f64>() + 0.0
    }
}

fn load_checkpoint_mixture(paths: &SeedPaths, task: usize) -> Result<GaussianMixture> {
    let path = paths.mixture(task);
    if !path.exists() {
        return Err(Error::Audit(format!("missing mixture checkpoint {}", path.display())));
    }
    load_mixture(&path)
}

fn load_snapshot(paths: &SeedPaths, task: usize) -> Result<crate::model::EmbeddingBatch> {
    let path = paths.embeddings(task);
    let f = File::open(&path)
        .map_err(|_| Error::Audit(format!("missing embedding snapshot {}", path.display())))?;
    let dump = read_embeddings(BufReader::new(f))?;
    let batch = dump.batch_for_task(task);
    if batch.labels.is_empty() {
        return Err(Error::Audit(format!("{} holds no rows for task {task}", path.display())));
    }
    Ok(batch)
}

/// Writes the report as CSV; absent columns stay empty.
pub fn write_audit<W: Write>(mut w: W, report: &AuditReport) -> Result<()> {
    writeln!(w, "{AUDIT_SCHEMA}")?;
    writeln!(w, "task,horizon,error,swd_fit,swd_drift_sum")?;
    for r in &report.rows {
        let fit = r.swd_fit.map(fmt_f64).unwrap_or_default();
        let drift = r.swd_drift_sum.map(fmt_f64).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", r.task, r.horizon, fmt_f64(r.error), fit, drift)?;
    }
    Ok(())
}
