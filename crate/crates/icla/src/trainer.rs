//! Per-task training loops for every strategy.
//!
//! All strategies share one loop: minibatches of the current task, optionally
//! interleaved half-and-half with a replay source. They differ only in what
//! that source is — nothing (naive), all past data (full replay), a bounded
//! buffer (memory buffer), or decoded mixture samples with an embedding
//! alignment penalty (the generative approach).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{TaskDataset, TaskStream};
use crate::error::{Error, Result};
use crate::gmm::{GaussianMixture, GmmConfig};
use crate::harness::curve::{CurveRow, LearningCurve};
use crate::model::{EmbeddingBatch, NetworkArch, NetworkParams, ParamGrads};
use crate::nn::adam::{AdamHyper, AdamState};
use crate::nn::loss::{cross_entropy, l2_reconstruction};
use crate::nn::matrix::Matrix;
use crate::replay::{full_replay_store, generate_pseudo, ClassAcceptance, PseudoDataset, ReplayBuffer, ReplayConfig};
use crate::seed;
use crate::swd::{class_conditional_swd, SwdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Train on each task alone; the forgetting floor.
    Naive,
    /// Replay all stored past data every task; the practical ceiling.
    FullReplay,
    /// Replay from a fixed-capacity class-balanced buffer.
    MemoryBuffer,
    /// Generative embedding replay with distribution alignment.
    Icla,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "naive" => Ok(Strategy::Naive),
            "fr" => Ok(Strategy::FullReplay),
            "mb" => Ok(Strategy::MemoryBuffer),
            "icla" => Ok(Strategy::Icla),
            other => Err(Error::Config(format!("unknown strategy '{other}' (known: icla, fr, mb, naive)"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Naive => write!(f, "naive"),
            Strategy::FullReplay => write!(f, "fr"),
            Strategy::MemoryBuffer => write!(f, "mb"),
            Strategy::Icla => write!(f, "icla"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamHyper,
    pub epochs_per_task: usize,
    pub batch_size: usize,
    /// Reconstruction weight in the combined loss.
    pub gamma: f64,
    /// Alignment weight on the sliced Wasserstein term.
    pub lambda: f64,
    /// Confidence threshold for accepting pseudo-samples.
    pub tau: f64,
    /// Pseudo-samples per class; 0 means min(1000, smallest per-class count
    /// of the current task).
    pub pseudo_per_class: usize,
    /// Attempt budget per class = factor × per_class.
    pub max_attempt_factor: usize,
    pub swd_projections: usize,
    /// Memory-buffer capacity (total examples).
    pub buffer_capacity: usize,
    pub gmm: GmmConfig,
    pub seed: u64,
    /// Retain per-task mixtures and test-set embeddings for auditing.
    pub keep_snapshots: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamHyper::default(),
            epochs_per_task: 20,
            batch_size: 64,
            gamma: 1.0,
            lambda: 0.1,
            tau: 0.9,
            pseudo_per_class: 0,
            max_attempt_factor: 20,
            swd_projections: 50,
            buffer_capacity: 100,
            gmm: GmmConfig::default(),
            seed: 1,
            keep_snapshots: false,
        }
    }
}

/// Combined supervised + reconstruction loss on one batch:
/// `CE(head(φ(x)), y) + γ · ||ψ(φ(x)) - x||²/n`, with gradients for every
/// parameter. The decoder pass is skipped entirely when γ = 0.
pub fn combined_loss(params: &NetworkParams, x: &Matrix, y: &Matrix, gamma: f64) -> Result<(f64, ParamGrads)> {
    let (loss, pass, d_logits, d_recon) = forward_losses(params, x, y, gamma)?;
    let grads = params.backward(&pass, Some(&d_logits), d_recon.as_ref(), None)?;
    Ok((loss, grads))
}

/// A replay half-batch. `targets` carries the embedding draws the inputs were
/// decoded from (alignment anchors); raw-data replay leaves it None.
pub struct ReplayBatch<'a> {
    pub inputs: &'a Matrix,
    pub onehot: &'a Matrix,
    pub labels: &'a [usize],
    pub targets: Option<&'a Matrix>,
}

/// Full training objective for a step with replay: combined loss on the
/// current half, combined loss on the replay half, and — when `targets` are
/// present — λ times the class-conditional sliced Wasserstein distance
/// between the replay batch's fresh embeddings and its targets, restricted
/// to `align_classes`. Gradient flows into the embeddings only through the
/// replay side; targets are constants. Returns the classes actually aligned.
pub fn replay_loss(
    params: &NetworkParams,
    current_x: &Matrix,
    current_y: &Matrix,
    replay: &ReplayBatch<'_>,
    gamma: f64,
    lambda: f64,
    align_classes: &BTreeSet<usize>,
    swd_cfg: &SwdConfig,
) -> Result<(f64, ParamGrads, BTreeSet<usize>)> {
    let (l_cur, pass_cur, dl_cur, dr_cur) = forward_losses(params, current_x, current_y, gamma)?;
    let mut grads = params.backward(&pass_cur, Some(&dl_cur), dr_cur.as_ref(), None)?;

    let (l_rep, pass_rep, dl_rep, dr_rep) = forward_losses(params, replay.inputs, replay.onehot, gamma)?;
    let mut loss = l_cur + l_rep;
    let mut aligned = BTreeSet::new();
    let mut d_embedding = None;
    if lambda != 0.0 {
        if let Some(targets) = replay.targets {
            let present: BTreeSet<usize> =
                replay.labels.iter().copied().filter(|c| align_classes.contains(c)).collect();
            if !present.is_empty() {
                let z = pass_rep.encoder_acts.last().unwrap();
                let fresh = EmbeddingBatch::new(z.clone(), replay.labels.to_vec());
                let anchor = EmbeddingBatch::new(targets.clone(), replay.labels.to_vec());
                let (v, mut g) = class_conditional_swd(&fresh, &anchor, &present, swd_cfg)?;
                loss += lambda * v;
                g.scale(lambda);
                d_embedding = Some(g);
                aligned = present;
            }
        }
    }
    let g_rep = params.backward(&pass_rep, Some(&dl_rep), dr_rep.as_ref(), d_embedding.as_ref())?;
    grads.add_scaled(&g_rep, 1.0)?;
    Ok((loss, grads, aligned))
}

fn forward_losses(
    params: &NetworkParams,
    x: &Matrix,
    y: &Matrix,
    gamma: f64,
) -> Result<(f64, crate::model::ForwardPass, Matrix, Option<Matrix>)> {
    let with_decoder = gamma != 0.0;
    let pass = params.forward(x, with_decoder)?;
    let (ce, d_logits) = cross_entropy(&pass.logits, y)?;
    let mut loss = ce;
    let d_recon = if with_decoder {
        let xhat = pass.decoder_acts.as_ref().unwrap().last().unwrap();
        let (rl, mut dr) = l2_reconstruction(xhat, x)?;
        loss += gamma * rl;
        dr.scale(gamma);
        Some(dr)
    } else {
        None
    };
    Ok((loss, pass, d_logits, d_recon))
}

/// Per-task mixtures and test-set embeddings captured as training proceeds,
/// for post-hoc drift audits. Entry `t` is taken at the end of task `t+1`.
#[derive(Debug, Clone, Default)]
pub struct RunSnapshots {
    pub mixtures: Vec<GaussianMixture>,
    /// Task t's own test data embedded by the encoder as it stood when
    /// task t finished.
    pub test_embeddings: Vec<EmbeddingBatch>,
}

#[derive(Debug)]
pub struct RunResult {
    pub strategy: Strategy,
    pub params: NetworkParams,
    pub head_slots: Vec<usize>,
    pub gmm: Option<GaussianMixture>,
    pub curve: LearningCurve,
    /// Mean training loss per epoch, per task (resume leaves earlier tasks empty).
    pub epoch_losses: Vec<Vec<f64>>,
    pub snapshots: Option<RunSnapshots>,
    /// Pseudo-generation acceptance stats per task (tasks 2+, generative runs).
    pub acceptance: Vec<Vec<ClassAcceptance>>,
}

/// End-of-task callback payload.
pub struct TaskEnd<'a> {
    pub task: usize,
    pub params: &'a NetworkParams,
    pub adam: &'a AdamState,
    pub gmm: Option<&'a GaussianMixture>,
    pub acceptance: Option<&'a [ClassAcceptance]>,
    /// This task's test set embedded by the just-trained encoder (present
    /// when snapshots are kept).
    pub test_embeddings: Option<&'a EmbeddingBatch>,
}

/// Hooks for streaming run progress (CSV writers, checkpointers).
pub trait RunObserver {
    fn on_epoch(&mut self, row: &CurveRow) -> Result<()> {
        let _ = row;
        Ok(())
    }
    fn on_task_end(&mut self, event: TaskEnd<'_>) -> Result<()> {
        let _ = event;
        Ok(())
    }
}

pub struct NullObserver;

impl RunObserver for NullObserver {}

/// A strategy's full state over a task stream, advanced one task at a time.
#[derive(Debug)]
pub struct ContinualRun {
    pub strategy: Strategy,
    pub cfg: TrainConfig,
    pub params: NetworkParams,
    pub adam: AdamState,
    /// Global class id carried by each classifier output column.
    pub head_slots: Vec<usize>,
    pub gmm: Option<GaussianMixture>,
    pub buffer: ReplayBuffer,
    pub curve: LearningCurve,
    pub epoch_losses: Vec<Vec<f64>>,
    pub snapshots: RunSnapshots,
    pub acceptance: Vec<Vec<ClassAcceptance>>,
    next_task: usize,
    started: Instant,
}

impl ContinualRun {
    pub fn new(stream: &TaskStream, arch: &NetworkArch, strategy: Strategy, cfg: TrainConfig) -> Result<ContinualRun> {
        validate_config(&cfg)?;
        if arch.input_dim != stream.input_dim {
            return Err(Error::Config(format!(
                "architecture expects {}-dim inputs, stream provides {}",
                arch.input_dim, stream.input_dim
            )));
        }
        let first = &stream.tasks[0];
        let head_slots: Vec<usize> = first.new_classes.clone();
        let mut rng = seed::rng_for(cfg.seed, "init", 0);
        let params = NetworkParams::new_seeded(arch, head_slots.len(), &mut rng);
        let adam = AdamState::new(cfg.adam, &params.slot_lens());
        let buffer = ReplayBuffer::new(cfg.buffer_capacity);
        Ok(ContinualRun {
            strategy,
            params,
            adam,
            head_slots,
            gmm: None,
            buffer,
            curve: LearningCurve::new(stream.num_tasks()),
            epoch_losses: vec![Vec::new(); stream.num_tasks()],
            snapshots: RunSnapshots::default(),
            acceptance: Vec::new(),
            next_task: 0,
            started: Instant::now(),
            cfg,
        })
    }

    /// Rebuilds a run that already finished `completed` tasks from its latest
    /// checkpoint. Replay state that is cheap to re-derive (buffer contents,
    /// RNG substreams) is replayed deterministically; the learning curve
    /// restarts empty and is stitched together by the caller.
    pub fn resume(
        stream: &TaskStream,
        strategy: Strategy,
        cfg: TrainConfig,
        completed: usize,
        params: NetworkParams,
        adam: AdamState,
        gmm: Option<GaussianMixture>,
    ) -> Result<ContinualRun> {
        validate_config(&cfg)?;
        if completed == 0 || completed > stream.num_tasks() {
            return Err(Error::Config(format!(
                "cannot resume after {completed} of {} tasks",
                stream.num_tasks()
            )));
        }
        let mut head_slots = Vec::new();
        for task in &stream.tasks[..completed] {
            head_slots.extend(task.new_classes.iter().copied());
        }
        if params.num_classes() != head_slots.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} classes but tasks 1..={completed} introduce {}",
                params.num_classes(),
                head_slots.len()
            )));
        }
        if strategy == Strategy::Icla && gmm.is_none() {
            return Err(Error::Data("generative resume needs a mixture checkpoint".to_string()));
        }
        let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
        if strategy == Strategy::MemoryBuffer {
            for task in &stream.tasks[..completed] {
                let mut rng = seed::rng_for(cfg.seed, "buffer", task.index as u64);
                buffer.update(&task.train, &mut rng)?;
            }
        }
        Ok(ContinualRun {
            strategy,
            params,
            adam,
            head_slots,
            gmm,
            buffer,
            curve: LearningCurve::new(stream.num_tasks()),
            epoch_losses: vec![Vec::new(); stream.num_tasks()],
            snapshots: RunSnapshots::default(),
            acceptance: Vec::new(),
            next_task: completed,
            started: Instant::now(),
            cfg,
        })
    }

    pub fn next_task(&self) -> usize {
        self.next_task
    }

    pub fn is_done(&self, stream: &TaskStream) -> bool {
        self.next_task >= stream.num_tasks()
    }

    pub fn into_result(self) -> RunResult {
        RunResult {
            strategy: self.strategy,
            params: self.params,
            head_slots: self.head_slots,
            gmm: self.gmm,
            curve: self.curve,
            epoch_losses: self.epoch_losses,
            snapshots: if self.cfg.keep_snapshots { Some(self.snapshots) } else { None },
            acceptance: self.acceptance,
        }
    }

    /// Trains the next task end to end: replay preparation, head growth,
    /// epoch loop with per-epoch evaluation, then end-of-task memory updates.
    pub fn train_next_task(&mut self, stream: &TaskStream, observer: &mut dyn RunObserver) -> Result<()> {
        let t0 = self.next_task;
        if t0 >= stream.num_tasks() {
            return Err(Error::Config("stream is exhausted".to_string()));
        }
        let task = &stream.tasks[t0];
        let t = task.index;
        let cfg = self.cfg.clone();

        // Pseudo-data is generated by the *previous* model (old head, old
        // decoder, old mixture) before anything about the network changes.
        let pseudo: Option<PseudoDataset> = if self.strategy == Strategy::Icla && t0 > 0 {
            let per_class = if cfg.pseudo_per_class > 0 {
                cfg.pseudo_per_class
            } else {
                min_class_count(&task.train).min(1000)
            };
            let rcfg = ReplayConfig {
                per_class,
                tau: cfg.tau,
                max_attempts: cfg.max_attempt_factor.saturating_mul(per_class).max(per_class),
                require_argmax: true,
            };
            let gmm = self.gmm.as_ref().ok_or_else(|| {
                Error::Estimation { class: 0, detail: "no mixture available for replay".to_string() }
            })?;
            let mut rng = seed::rng_for(cfg.seed, "pseudo", t as u64);
            let ps = generate_pseudo(gmm, &self.params, &self.head_slots, &rcfg, &mut rng)?;
            self.acceptance.push(ps.acceptance.clone());
            Some(ps)
        } else {
            None
        };

        if t0 > 0 && !task.new_classes.is_empty() {
            let new_total = self.head_slots.len() + task.new_classes.len();
            let mut rng = seed::rng_for(cfg.seed, "expand", t as u64);
            self.params.expand_head(new_total, &mut rng, Some(&mut self.adam))?;
            self.head_slots.extend(task.new_classes.iter().copied());
        }

        // Raw-data replay sources.
        let stored_replay: Option<TaskDataset> = match self.strategy {
            Strategy::FullReplay if t0 > 0 => {
                let past: Vec<&TaskDataset> = stream.tasks[..t0].iter().map(|tk| &tk.train).collect();
                Some(full_replay_store(&past)?)
            }
            Strategy::MemoryBuffer if t0 > 0 => self.buffer.as_dataset("memory-buffer"),
            _ => None,
        };

        let cur_onehot = task.train.onehot(&self.head_slots)?;
        let replay_side: Option<(Matrix, Matrix, Vec<usize>, Option<Matrix>)> = match (&pseudo, &stored_replay) {
            (Some(ps), _) => {
                let ds = ps.as_dataset("pseudo")?;
                let onehot = ds.onehot(&self.head_slots)?;
                Some((ds.inputs, onehot, ds.labels, Some(ps.embeddings.clone())))
            }
            (None, Some(ds)) => {
                let onehot = ds.onehot(&self.head_slots)?;
                Some((ds.inputs.clone(), onehot, ds.labels.clone(), None))
            }
            (None, None) => None,
        };

        // Classes whose embedding distribution the alignment term protects:
        // everything seen before this task.
        let align_classes: BTreeSet<usize> =
            if self.strategy == Strategy::Icla && t0 > 0 && cfg.lambda != 0.0 {
                stream.classes_through(t0)
            } else {
                BTreeSet::new()
            };

        let eval = EvalUnion::build(&stream.tasks[..=t0])?;
        let n_cur = task.train.len();
        let (cur_bs, rep_bs) = if replay_side.is_some() {
            let rep = (cfg.batch_size / 2).max(1);
            (cfg.batch_size - rep, rep)
        } else {
            (cfg.batch_size, 0)
        };

        let mut rng_shuffle = seed::rng_for(cfg.seed, "shuffle", t as u64);
        let mut rng_swd = seed::rng_for(cfg.seed, "swd", t as u64);

        for epoch in 1..=cfg.epochs_per_task {
            let mut order: Vec<usize> = (0..n_cur).collect();
            order.shuffle(&mut rng_shuffle);
            let rep_order: Option<Vec<usize>> = replay_side.as_ref().map(|(inputs, ..)| {
                let mut o: Vec<usize> = (0..inputs.rows()).collect();
                o.shuffle(&mut rng_shuffle);
                o
            });
            let mut rep_cursor = 0usize;
            let mut aligned_epoch: BTreeSet<usize> = BTreeSet::new();
            let mut loss_sum = 0.0;
            let mut steps = 0usize;

            for chunk in order.chunks(cur_bs.max(1)) {
                let x = task.train.inputs.select_rows(chunk);
                let y = cur_onehot.select_rows(chunk);
                let (loss, grads) = match (&replay_side, &rep_order) {
                    (Some((r_inputs, r_onehot, r_labels, r_targets)), Some(ro)) => {
                        let idx: Vec<usize> =
                            (0..rep_bs).map(|i| ro[(rep_cursor + i) % ro.len()]).collect();
                        rep_cursor = (rep_cursor + rep_bs) % ro.len().max(1);
                        let rx = r_inputs.select_rows(&idx);
                        let ry = r_onehot.select_rows(&idx);
                        let rl: Vec<usize> = idx.iter().map(|&i| r_labels[i]).collect();
                        let rt = r_targets.as_ref().map(|targets| targets.select_rows(&idx));
                        let batch = ReplayBatch {
                            inputs: &rx,
                            onehot: &ry,
                            labels: &rl,
                            targets: rt.as_ref(),
                        };
                        let swd_cfg = SwdConfig {
                            projections: cfg.swd_projections,
                            seed: rng_swd.random(),
                        };
                        let (loss, grads, aligned) = replay_loss(
                            &self.params,
                            &x,
                            &y,
                            &batch,
                            cfg.gamma,
                            cfg.lambda,
                            &align_classes,
                            &swd_cfg,
                        )?;
                        aligned_epoch.extend(aligned);
                        (loss, grads)
                    }
                    _ => combined_loss(&self.params, &x, &y, cfg.gamma)?,
                };
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!("task {t} epoch {epoch}: loss is {loss}")));
                }
                loss_sum += loss;
                steps += 1;
                self.adam
                    .step(&mut self.params.param_slices_mut(), &grads.grad_slices())
                    .map_err(|e| match e {
                        Error::Divergence(msg) => Error::Divergence(format!("task {t} epoch {epoch}: {msg}")),
                        other => other,
                    })?;
            }

            if !align_classes.is_empty() {
                for &c in &align_classes {
                    if !aligned_epoch.contains(&c) {
                        return Err(Error::Alignment { class: c, side: "replay minibatches" });
                    }
                }
            }

            let (cumulative, per_task_seen) = evaluate(&self.params, &self.head_slots, &eval)?;
            let mut per_task = vec![None; stream.num_tasks()];
            for (i, acc) in per_task_seen.into_iter().enumerate() {
                per_task[i] = Some(acc);
            }
            let row = CurveRow {
                task: t,
                epoch,
                cumulative_accuracy: cumulative,
                per_task,
                wall_secs: self.started.elapsed().as_secs_f64(),
            };
            self.curve.rows.push(row.clone());
            observer.on_epoch(&row)?;
            self.epoch_losses[t0].push(loss_sum / steps.max(1) as f64);
        }

        // End of task: refresh whichever memory this strategy maintains.
        match self.strategy {
            Strategy::Icla => {
                let cur_z = encode_batched(&self.params, &task.train.inputs)?;
                let current = EmbeddingBatch::new(cur_z, task.train.labels.clone());
                let pseudo_re = match &pseudo {
                    Some(ps) => {
                        let z = encode_batched(&self.params, &ps.inputs)?;
                        Some(EmbeddingBatch::new(z, ps.labels.clone()))
                    }
                    None => None,
                };
                let expected = stream.classes_through(t);
                let gmm = GaussianMixture::update_distribution(
                    &current,
                    pseudo_re.as_ref(),
                    &expected,
                    &cfg.gmm,
                )?;
                self.gmm = Some(gmm);
            }
            Strategy::MemoryBuffer => {
                let mut rng = seed::rng_for(cfg.seed, "buffer", t as u64);
                self.buffer.update(&task.train, &mut rng)?;
            }
            _ => {}
        }

        if cfg.keep_snapshots {
            let z = encode_batched(&self.params, &task.test.inputs)?;
            self.snapshots.test_embeddings.push(EmbeddingBatch::new(z, task.test.labels.clone()));
            if let Some(g) = &self.gmm {
                self.snapshots.mixtures.push(g.clone());
            }
        }

        observer.on_task_end(TaskEnd {
            task: t,
            params: &self.params,
            adam: &self.adam,
            gmm: self.gmm.as_ref(),
            acceptance: self.acceptance.last().map(|a| a.as_slice()),
            test_embeddings: if cfg.keep_snapshots {
                self.snapshots.test_embeddings.last()
            } else {
                None
            },
        })?;
        self.next_task += 1;
        Ok(())
    }
}

/// Rejects knob combinations no strategy can run with.
pub fn validate_config(cfg: &TrainConfig) -> Result<()> {
    if cfg.batch_size < 2 {
        return Err(Error::Config("batch size must be at least 2".to_string()));
    }
    if cfg.epochs_per_task == 0 {
        return Err(Error::Config("epochs per task must be positive".to_string()));
    }
    if cfg.gamma < 0.0 || cfg.lambda < 0.0 {
        return Err(Error::Config("gamma and lambda must be non-negative".to_string()));
    }
    if !(0.0..=1.0).contains(&cfg.tau) {
        return Err(Error::Config(format!("tau {} outside [0, 1]", cfg.tau)));
    }
    if cfg.swd_projections == 0 {
        return Err(Error::Config("swd projections must be positive".to_string()));
    }
    Ok(())
}

fn min_class_count(ds: &TaskDataset) -> usize {
    ds.class_set
        .iter()
        .map(|&c| ds.labels.iter().filter(|&&l| l == c).count())
        .min()
        .unwrap_or(0)
        .max(1)
}

/// Test data of all seen tasks, stacked, with per-task row ranges.
struct EvalUnion {
    inputs: Matrix,
    labels: Vec<usize>,
    ranges: Vec<(usize, usize)>,
}

impl EvalUnion {
    fn build(tasks: &[crate::data::Task]) -> Result<EvalUnion> {
        let total: usize = tasks.iter().map(|t| t.test.len()).sum();
        let dim = tasks[0].test.dim();
        let mut inputs = Matrix::zeros(total, dim);
        let mut labels = Vec::with_capacity(total);
        let mut ranges = Vec::with_capacity(tasks.len());
        let mut row = 0;
        for task in tasks {
            let start = row;
            for i in 0..task.test.len() {
                inputs.row_mut(row).copy_from_slice(task.test.inputs.row(i));
                labels.push(task.test.labels[i]);
                row += 1;
            }
            ranges.push((start, row));
        }
        Ok(EvalUnion { inputs, labels, ranges })
    }
}

/// Argmax accuracy over the union and per task range.
fn evaluate(params: &NetworkParams, head_slots: &[usize], eval: &EvalUnion) -> Result<(f64, Vec<f64>)> {
    let n = eval.labels.len();
    let mut correct = vec![false; n];
    let chunk = 512;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x = eval.inputs.select_rows(&idx);
        let z = params.encode(&x)?;
        let logits = params.head_logits(&z)?;
        for (local, global) in (start..end).enumerate() {
            let row = logits.row(local);
            let best = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap();
            correct[global] = head_slots[best] == eval.labels[global];
        }
        start = end;
    }
    let overall = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
    let mut per_task = Vec::with_capacity(eval.ranges.len());
    for &(a, b) in &eval.ranges {
        let hits = correct[a..b].iter().filter(|&&c| c).count();
        per_task.push(hits as f64 / (b - a) as f64);
    }
    Ok((overall, per_task))
}

/// Embeddings for a large matrix, computed in bounded chunks.
pub fn encode_batched(params: &NetworkParams, inputs: &Matrix) -> Result<Matrix> {
    let n = inputs.rows();
    let mut out = Matrix::zeros(n, params.embedding_dim());
    let chunk = 512;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let z = params.encode(&inputs.select_rows(&idx))?;
        for (local, global) in (start..end).enumerate() {
            out.row_mut(global).copy_from_slice(z.row(local));
        }
        start = end;
    }
    Ok(out)
}

/// Runs any strategy over the whole stream.
pub fn run_strategy(
    stream: &TaskStream,
    arch: &NetworkArch,
    strategy: Strategy,
    cfg: TrainConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunResult> {
    let mut run = ContinualRun::new(stream, arch, strategy, cfg)?;
    while !run.is_done(stream) {
        run.train_next_task(stream, observer)?;
    }
    Ok(run.into_result())
}

/// The generative-replay strategy over the whole stream.
pub fn run_icla(
    stream: &TaskStream,
    arch: &NetworkArch,
    cfg: TrainConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunResult> {
    run_strategy(stream, arch, Strategy::Icla, cfg, observer)
}

/// A non-generative baseline over the whole stream.
pub fn run_baseline(
    stream: &TaskStream,
    arch: &NetworkArch,
    strategy: Strategy,
    cfg: TrainConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunResult> {
    run_strategy(stream, arch, strategy, cfg, observer)
}
