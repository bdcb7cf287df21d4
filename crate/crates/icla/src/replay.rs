//! Replay sources: generated pseudo-samples and stored-example buffers.

use std::collections::BTreeMap;

use rand::seq::index::sample as index_sample;
use rand::Rng;

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::model::{EmbeddingBatch, NetworkParams};
use crate::nn::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    /// Target pseudo-samples per class.
    pub per_class: usize,
    /// Classifier confidence a decoded sample must reach on its own class.
    pub tau: f64,
    /// Total draw budget per class before giving up.
    pub max_attempts: usize,
    /// Also require argmax agreement with the generating class (the usual
    /// filter; switch off to accept on confidence alone).
    pub require_argmax: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig { per_class: 1000, tau: 0.9, max_attempts: 20_000, require_argmax: true }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassAcceptance {
    pub class: usize,
    pub accepted: usize,
    pub attempted: usize,
}

impl ClassAcceptance {
    pub fn rate(&self) -> f64 {
        self.accepted as f64 / self.attempted.max(1) as f64
    }
}

/// Decoded stand-ins for previous tasks' data. `embeddings` holds the raw
/// mixture draws z̃ each input was decoded from — they act as fixed alignment
/// targets, *not* as re-encodings of the inputs.
#[derive(Debug, Clone)]
pub struct PseudoDataset {
    pub inputs: Matrix,
    pub embeddings: Matrix,
    pub labels: Vec<usize>,
    pub acceptance: Vec<ClassAcceptance>,
}

impl PseudoDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn embedding_batch(&self) -> EmbeddingBatch {
        EmbeddingBatch::new(self.embeddings.clone(), self.labels.clone())
    }

    pub fn as_dataset(&self, name: &str) -> Result<TaskDataset> {
        TaskDataset::new(name, self.inputs.clone(), self.labels.clone())
    }
}

/// Samples each mixture component, decodes the draws, and keeps those the
/// classifier confidently assigns to the generating class. Classes are
/// processed in id order; a class that accepts nothing within its budget is
/// a starvation error, while partial fills are allowed and visible through
/// the per-class acceptance stats.
///
/// `head_slots` maps classifier output columns to global class ids.
pub fn generate_pseudo<R: Rng + ?Sized>(
    gmm: &GaussianMixture,
    params: &NetworkParams,
    head_slots: &[usize],
    cfg: &ReplayConfig,
    rng: &mut R,
) -> Result<PseudoDataset> {
    if cfg.per_class == 0 {
        return Err(Error::Config("pseudo per_class must be positive".to_string()));
    }
    if !(0.0..=1.0).contains(&cfg.tau) {
        return Err(Error::Config(format!("tau {} outside [0, 1]", cfg.tau)));
    }
    let dim = gmm.dim;
    let input_dim = params.arch.input_dim;
    let mut rows_inputs: Vec<f64> = Vec::new();
    let mut rows_embeddings: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut acceptance = Vec::with_capacity(gmm.num_components());

    for comp in &gmm.components {
        let slot = head_slots.iter().position(|&c| c == comp.class_id).ok_or_else(|| {
            Error::Config(format!("class {} has no classifier output", comp.class_id))
        })?;
        let mut accepted = 0usize;
        let mut attempted = 0usize;
        while accepted < cfg.per_class && attempted < cfg.max_attempts {
            let want = (cfg.per_class - accepted).min(cfg.max_attempts - attempted);
            let mut draws = Matrix::zeros(want, dim);
            for i in 0..want {
                let z = comp.sample(rng);
                draws.row_mut(i).copy_from_slice(&z);
            }
            attempted += want;
            let decoded = params.decode(&draws)?;
            let probs = params.classify(&decoded)?;
            for i in 0..want {
                let p = probs.row(i);
                let (argmax, best) = p
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap();
                let own = p[slot];
                let ok = own >= cfg.tau && (!cfg.require_argmax || argmax == slot);
                if ok {
                    rows_inputs.extend_from_slice(decoded.row(i));
                    rows_embeddings.extend_from_slice(draws.row(i));
                    labels.push(comp.class_id);
                    accepted += 1;
                    if accepted == cfg.per_class {
                        break;
                    }
                }
                let _ = best;
            }
        }
        if accepted == 0 {
            return Err(Error::Starvation { class: comp.class_id, attempts: attempted, tau: cfg.tau });
        }
        acceptance.push(ClassAcceptance { class: comp.class_id, accepted, attempted });
    }

    let n = labels.len();
    Ok(PseudoDataset {
        inputs: Matrix::from_vec(n, input_dim, rows_inputs),
        embeddings: Matrix::from_vec(n, dim, rows_embeddings),
        labels,
        acceptance,
    })
}

/// Fixed-capacity episodic memory holding raw examples, balanced per class.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    pub capacity: usize,
    slots: BTreeMap<usize, Vec<Vec<f64>>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer { capacity, slots: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.slots.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn classes(&self) -> Vec<usize> {
        self.slots.keys().copied().collect()
    }

    pub fn count_for(&self, class: usize) -> usize {
        self.slots.get(&class).map_or(0, Vec::len)
    }

    /// Absorbs a finished task: every class (old and new) ends up with at
    /// most `capacity / classes_seen` examples, chosen uniformly from what is
    /// available (stored examples plus the task's own samples for classes the
    /// task contains). Errors if the per-class quota would be zero.
    pub fn update<R: Rng + ?Sized>(&mut self, task: &TaskDataset, rng: &mut R) -> Result<()> {
        let mut classes: Vec<usize> = self.slots.keys().copied().collect();
        for &c in &task.class_set {
            if !classes.contains(&c) {
                classes.push(c);
            }
        }
        classes.sort_unstable();
        let quota = self.capacity / classes.len();
        if quota == 0 {
            return Err(Error::Config(format!(
                "buffer capacity {} cannot hold {} classes (per-class quota is zero)",
                self.capacity,
                classes.len()
            )));
        }
        for &class in &classes {
            let mut pool: Vec<Vec<f64>> = self.slots.remove(&class).unwrap_or_default();
            if task.class_set.contains(&class) {
                for (i, &l) in task.labels.iter().enumerate() {
                    if l == class {
                        pool.push(task.inputs.row(i).to_vec());
                    }
                }
            }
            let kept = if pool.len() > quota {
                let chosen = index_sample(rng, pool.len(), quota);
                let mut idx: Vec<usize> = chosen.into_iter().collect();
                idx.sort_unstable();
                idx.into_iter().map(|i| pool[i].clone()).collect()
            } else {
                pool
            };
            self.slots.insert(class, kept);
        }
        Ok(())
    }

    /// Buffer contents as a training dataset (None while empty).
    pub fn as_dataset(&self, name: &str) -> Option<TaskDataset> {
        if self.is_empty() {
            return None;
        }
        let rows: Vec<Vec<f64>> = self.slots.values().flatten().cloned().collect();
        let labels: Vec<usize> = self
            .slots
            .iter()
            .flat_map(|(&c, v)| std::iter::repeat_n(c, v.len()))
            .collect();
        TaskDataset::new(name, Matrix::from_rows(&rows), labels).ok()
    }
}

/// Concatenation of all past tasks' training data (the full-replay source).
pub fn full_replay_store(past: &[&TaskDataset]) -> Result<TaskDataset> {
    let first = past
        .first()
        .ok_or_else(|| Error::Data("full replay needs at least one past task".to_string()))?;
    let mut acc = (*first).clone();
    for ds in &past[1..] {
        acc = acc.concat(ds, "full-replay")?;
    }
    acc.name = "full-replay".to_string();
    Ok(acc)
}
