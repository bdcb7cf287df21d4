//! Task streams: labeled datasets arriving one task at a time.
//!
//! Bookkeeping lives here — which classes a task introduces versus which it
//! revisits — so training code never has to re-derive it.

pub mod blobs;
pub mod idx;
pub mod protocols;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

/// One labeled split: inputs as rows, labels as global class ids.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub name: String,
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub class_set: BTreeSet<usize>,
}

impl TaskDataset {
    pub fn new(name: impl Into<String>, inputs: Matrix, labels: Vec<usize>) -> Result<TaskDataset> {
        let name = name.into();
        if inputs.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{name}: {} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if inputs.rows() == 0 {
            return Err(Error::Data(format!("{name}: empty dataset")));
        }
        if !inputs.is_finite() {
            return Err(Error::Data(format!("{name}: non-finite input values")));
        }
        let class_set: BTreeSet<usize> = labels.iter().copied().collect();
        Ok(TaskDataset { name, inputs, labels, class_set })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// One-hot targets with columns ordered by position in `slots` (the class
    /// layout of a classifier head). Errors if a label has no slot.
    pub fn onehot(&self, slots: &[usize]) -> Result<Matrix> {
        let mut y = Matrix::zeros(self.len(), slots.len());
        for (i, &label) in self.labels.iter().enumerate() {
            let j = slots
                .iter()
                .position(|&c| c == label)
                .ok_or_else(|| Error::Data(format!("{}: label {label} not in head layout {slots:?}", self.name)))?;
            y.set(i, j, 1.0);
        }
        Ok(y)
    }

    /// New dataset from the given row indices, in order.
    pub fn select(&self, indices: &[usize], name: impl Into<String>) -> Result<TaskDataset> {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        TaskDataset::new(name, self.inputs.select_rows(indices), labels)
    }

    pub fn concat(&self, other: &TaskDataset, name: impl Into<String>) -> Result<TaskDataset> {
        if self.dim() != other.dim() {
            return Err(Error::Data(format!(
                "cannot concat {}-dim {} with {}-dim {}",
                self.dim(),
                self.name,
                other.dim(),
                other.name
            )));
        }
        let inputs = self.inputs.vstack(&other.inputs)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        TaskDataset::new(name, inputs, labels)
    }

    /// Seeded per-class subsample keeping `ceil(count · fraction)` of each
    /// class (never less than one), preserving ascending row order.
    pub fn subsample<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<TaskDataset> {
        if !(0.0..=1.0).contains(&fraction) || fraction == 0.0 {
            return Err(Error::Config(format!("data fraction {fraction} outside (0, 1]")));
        }
        if fraction == 1.0 {
            return Ok(self.clone());
        }
        let mut keep: Vec<usize> = Vec::new();
        for &class in &self.class_set {
            let mut rows: Vec<usize> = self
                .labels
                .iter()
                .enumerate()
                .filter_map(|(i, &l)| (l == class).then_some(i))
                .collect();
            let quota = ((rows.len() as f64 * fraction).ceil() as usize).max(1);
            rows.shuffle(rng);
            rows.truncate(quota);
            keep.extend(rows);
        }
        keep.sort_unstable();
        self.select(&keep, self.name.clone())
    }
}

/// One step of the stream with its class bookkeeping.
#[derive(Debug, Clone)]
pub struct Task {
    /// 1-based position in the stream.
    pub index: usize,
    pub train: TaskDataset,
    pub test: TaskDataset,
    /// Classes appearing for the first time (sorted).
    pub new_classes: Vec<usize>,
    /// Classes seen in earlier tasks that appear again here (sorted).
    pub old_classes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub name: String,
    pub input_dim: usize,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    /// Assembles the stream and derives new/old class sets per task. Each
    /// task's test split must cover exactly the classes of its train split.
    pub fn new(name: impl Into<String>, pairs: Vec<(TaskDataset, TaskDataset)>) -> Result<TaskStream> {
        let name = name.into();
        if pairs.is_empty() {
            return Err(Error::Data(format!("{name}: no tasks")));
        }
        let input_dim = pairs[0].0.dim();
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut tasks = Vec::with_capacity(pairs.len());
        for (i, (train, test)) in pairs.into_iter().enumerate() {
            if train.dim() != input_dim || test.dim() != input_dim {
                return Err(Error::Data(format!("{name}: task {} has inconsistent input width", i + 1)));
            }
            if train.class_set != test.class_set {
                return Err(Error::Data(format!(
                    "{name}: task {} train classes {:?} != test classes {:?}",
                    i + 1,
                    train.class_set,
                    test.class_set
                )));
            }
            let new_classes: Vec<usize> = train.class_set.difference(&seen).copied().collect();
            let old_classes: Vec<usize> = train.class_set.intersection(&seen).copied().collect();
            seen.extend(train.class_set.iter().copied());
            tasks.push(Task { index: i + 1, train, test, new_classes, old_classes });
        }
        Ok(TaskStream { name, input_dim, tasks })
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Distinct classes across the whole stream.
    pub fn total_classes(&self) -> usize {
        let mut all = BTreeSet::new();
        for t in &self.tasks {
            all.extend(t.train.class_set.iter().copied());
        }
        all.len()
    }

    /// Classes seen in tasks 1..=through (1-based).
    pub fn classes_through(&self, through: usize) -> BTreeSet<usize> {
        let mut all = BTreeSet::new();
        for t in &self.tasks[..through.min(self.tasks.len())] {
            all.extend(t.train.class_set.iter().copied());
        }
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(name: &str, labels: &[usize]) -> TaskDataset {
        let rows: Vec<Vec<f64>> = labels.iter().map(|&l| vec![l as f64, 0.5]).collect();
        TaskDataset::new(name, Matrix::from_rows(&rows), labels.to_vec()).unwrap()
    }

    #[test]
    fn stream_bookkeeping_splits_new_and_old() {
        let stream = TaskStream::new(
            "toy",
            vec![
                (ds("t1", &[0, 1, 0]), ds("t1e", &[0, 1])),
                (ds("t2", &[2, 3]), ds("t2e", &[2, 3])),
                (ds("t3", &[0, 4, 2]), ds("t3e", &[0, 2, 4])),
            ],
        )
        .unwrap();
        assert_eq!(stream.tasks[0].new_classes, vec![0, 1]);
        assert!(stream.tasks[0].old_classes.is_empty());
        assert_eq!(stream.tasks[1].new_classes, vec![2, 3]);
        assert!(stream.tasks[1].old_classes.is_empty());
        assert_eq!(stream.tasks[2].new_classes, vec![4]);
        assert_eq!(stream.tasks[2].old_classes, vec![0, 2]);
        assert_eq!(stream.total_classes(), 5);
        assert_eq!(stream.classes_through(2), [0, 1, 2, 3].into_iter().collect());
        // New and old never overlap.
        for t in &stream.tasks {
            assert!(t.new_classes.iter().all(|c| !t.old_classes.contains(c)));
        }
    }

    #[test]
    fn stream_rejects_mismatched_test_classes() {
        let err = TaskStream::new("bad", vec![(ds("t1", &[0, 1]), ds("t1e", &[0]))]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn onehot_follows_slot_order() {
        let d = ds("t", &[5, 2]);
        let y = d.onehot(&[2, 5]).unwrap();
        assert_eq!(y.data(), &[0.0, 1.0, 1.0, 0.0]);
        assert!(d.onehot(&[2]).is_err());
    }

    #[test]
    fn subsample_is_per_class_and_seeded() {
        use rand::SeedableRng;
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let d = ds("big", &labels);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let s = d.subsample(0.1, &mut rng).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.labels.iter().filter(|&&l| l == 0).count(), 5);
        // Same seed → same rows.
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let s2 = d.subsample(0.1, &mut rng2).unwrap();
        assert_eq!(s.labels, s2.labels);
        assert_eq!(s.inputs, s2.inputs);
    }

    #[test]
    fn dataset_rejects_label_count_mismatch() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        assert!(TaskDataset::new("x", m, vec![0]).is_err());
    }
}
