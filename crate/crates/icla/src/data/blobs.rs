//! Synthetic Gaussian-blob task streams for fast, data-free experiments.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{TaskDataset, TaskStream};
use crate::error::Result;
use crate::nn::matrix::Matrix;

/// One class within one task: an isotropic Gaussian at `mean` with the given
/// standard deviation and per-split sample counts.
#[derive(Debug, Clone)]
pub struct BlobClass {
    pub class_id: usize,
    pub mean: Vec<f64>,
    pub std: f64,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone)]
pub struct BlobTask {
    pub classes: Vec<BlobClass>,
}

/// Samples every task's blobs with one seeded generator pass; the same seed
/// always yields the same stream.
pub fn make_blob_stream<R: Rng + ?Sized>(name: &str, tasks: &[BlobTask], rng: &mut R) -> Result<TaskStream> {
    let mut pairs = Vec::with_capacity(tasks.len());
    for (t, task) in tasks.iter().enumerate() {
        let train = sample_split(task, |c| c.train, rng)?;
        let test = sample_split(task, |c| c.test, rng)?;
        let train = TaskDataset::new(format!("{name}-task{}-train", t + 1), train.0, train.1)?;
        let test = TaskDataset::new(format!("{name}-task{}-test", t + 1), test.0, test.1)?;
        pairs.push((train, test));
    }
    TaskStream::new(name, pairs)
}

fn sample_split<R: Rng + ?Sized>(
    task: &BlobTask,
    count: impl Fn(&BlobClass) -> usize,
    rng: &mut R,
) -> Result<(Matrix, Vec<usize>)> {
    let dim = task.classes[0].mean.len();
    let total: usize = task.classes.iter().map(&count).sum();
    let mut points = Matrix::zeros(total, dim);
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for class in &task.classes {
        for _ in 0..count(class) {
            let dst = points.row_mut(row);
            for (d, &m) in dst.iter_mut().zip(&class.mean) {
                let g: f64 = StandardNormal.sample(rng);
                *d = m + class.std * g;
            }
            labels.push(class.class_id);
            row += 1;
        }
    }
    Ok((points, labels))
}

fn blob(class_id: usize, mean: [f64; 2], std: f64, train: usize, test: usize) -> BlobClass {
    BlobClass { class_id, mean: mean.to_vec(), std, train, test }
}

/// Two tasks, two well-separated classes each (ids 0..3).
pub fn two_task() -> Vec<BlobTask> {
    vec![
        BlobTask { classes: vec![blob(0, [-3.0, 0.0], 0.4, 200, 100), blob(1, [3.0, 0.0], 0.4, 200, 100)] },
        BlobTask { classes: vec![blob(2, [0.0, 3.0], 0.4, 200, 100), blob(3, [0.0, -3.0], 0.4, 200, 100)] },
    ]
}

/// Three tasks, two classes each, class means on a hexagon (ids 0..5).
pub fn three_task() -> Vec<BlobTask> {
    let mut tasks = Vec::new();
    for t in 0..3 {
        let mut classes = Vec::new();
        for i in 0..2 {
            let id = 2 * t + i;
            let angle = std::f64::consts::PI / 3.0 * id as f64;
            classes.push(blob(id, [3.0 * angle.cos(), 3.0 * angle.sin()], 0.35, 150, 75));
        }
        tasks.push(BlobTask { classes });
    }
    tasks
}

/// Two classes whose means drift a little every task (ids 0..1 reappear in
/// all three tasks) while a new class pair arrives in task 2 — old-class
/// distributions change under the model's feet.
pub fn drifting() -> Vec<BlobTask> {
    let shift = |s: f64| move |m: [f64; 2]| [m[0] + s, m[1] + s];
    let base0 = [-3.0, 0.0];
    let base1 = [3.0, 0.0];
    vec![
        BlobTask { classes: vec![blob(0, base0, 0.4, 150, 75), blob(1, base1, 0.4, 150, 75)] },
        BlobTask {
            classes: vec![
                blob(0, shift(0.5)(base0), 0.4, 150, 75),
                blob(1, shift(0.5)(base1), 0.4, 150, 75),
                blob(2, [0.0, 3.5], 0.4, 150, 75),
            ],
        },
        BlobTask {
            classes: vec![
                blob(0, shift(1.0)(base0), 0.4, 150, 75),
                blob(1, shift(1.0)(base1), 0.4, 150, 75),
                blob(3, [0.0, -3.5], 0.4, 150, 75),
            ],
        },
    ]
}
