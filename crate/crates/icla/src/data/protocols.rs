//! Named experiment protocols: how a dataset becomes a task stream.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::data::{blobs, idx, TaskDataset, TaskStream};
use crate::error::{Error, Result};
use crate::model::NetworkArch;
use crate::nn::matrix::Matrix;
use crate::seed;

/// The experiment protocols the harness knows by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// 2 tasks × 2 synthetic blob classes.
    Blobs2T,
    /// 3 tasks × 2 synthetic blob classes.
    Blobs3T,
    /// 3 blob tasks where earlier classes reappear with drifted means.
    BlobsDrift,
    /// MNIST: task 1 = digits {0,1}, then one new digit per task (9 tasks).
    Mnist9T,
    /// MNIST: five tasks of digit pairs (0,1), (2,3), …, (8,9).
    Mnist5T,
    /// MNIST: two tasks, digits 0–4 then 5–9.
    Mnist2T,
    /// FashionMNIST: four tasks of class pairs over classes 0–7.
    Fmnist4T,
    /// Pixel-permuted MNIST with a growing digit set; old digits return
    /// under fresh permutations, so their input distribution drifts.
    Permuted { tasks: usize },
}

pub const PROTOCOL_NAMES: &[&str] =
    &["blobs2T", "blobs3T", "blobsDrift", "mnist9T", "mnist5T", "mnist2T", "fmnist4T", "permuted3T", "permuted5T"];

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Protocol> {
        match s {
            "blobs2T" => Ok(Protocol::Blobs2T),
            "blobs3T" => Ok(Protocol::Blobs3T),
            "blobsDrift" => Ok(Protocol::BlobsDrift),
            "mnist9T" => Ok(Protocol::Mnist9T),
            "mnist5T" => Ok(Protocol::Mnist5T),
            "mnist2T" => Ok(Protocol::Mnist2T),
            "fmnist4T" => Ok(Protocol::Fmnist4T),
            other => {
                if let Some(t) = other.strip_prefix("permuted").and_then(|r| r.strip_suffix('T')) {
                    let tasks: usize = t
                        .parse()
                        .map_err(|_| Error::Config(format!("unknown protocol '{other}'")))?;
                    if !(2..=5).contains(&tasks) {
                        return Err(Error::Config(format!("permuted protocol supports 2-5 tasks, got {tasks}")));
                    }
                    return Ok(Protocol::Permuted { tasks });
                }
                Err(Error::Config(format!(
                    "unknown protocol '{other}' (known: {})",
                    PROTOCOL_NAMES.join(", ")
                )))
            }
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Blobs2T => write!(f, "blobs2T"),
            Protocol::Blobs3T => write!(f, "blobs3T"),
            Protocol::BlobsDrift => write!(f, "blobsDrift"),
            Protocol::Mnist9T => write!(f, "mnist9T"),
            Protocol::Mnist5T => write!(f, "mnist5T"),
            Protocol::Mnist2T => write!(f, "mnist2T"),
            Protocol::Fmnist4T => write!(f, "fmnist4T"),
            Protocol::Permuted { tasks } => write!(f, "permuted{tasks}T"),
        }
    }
}

/// Everything a protocol needs to materialize its stream.
#[derive(Debug, Clone)]
pub struct StreamOptions {
    /// Root holding `mnist/` and `fashion-mnist/` IDX files. Unused by blobs.
    pub data_dir: Option<PathBuf>,
    /// Per-class fraction of each task kept (deterministic subsample).
    pub data_fraction: f64,
    /// Seeds protocol-level randomness shared across runs: pixel
    /// permutations and subsampling.
    pub protocol_seed: u64,
    /// Seeds per-run data randomness (blob draws).
    pub run_seed: u64,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions { data_dir: None, data_fraction: 1.0, protocol_seed: 0, run_seed: 0 }
    }
}

impl Protocol {
    /// Name of the dataset directory this protocol reads, if any.
    pub fn dataset(&self) -> Option<&'static str> {
        match self {
            Protocol::Blobs2T | Protocol::Blobs3T | Protocol::BlobsDrift => None,
            Protocol::Fmnist4T => Some("fashion-mnist"),
            _ => Some("mnist"),
        }
    }

    /// Class groups per task for the fixed-partition image protocols.
    pub fn class_partition(&self) -> Option<Vec<Vec<usize>>> {
        match self {
            Protocol::Mnist9T => {
                let mut groups = vec![vec![0, 1]];
                groups.extend((2..10).map(|d| vec![d]));
                Some(groups)
            }
            Protocol::Mnist5T => Some((0..5).map(|t| vec![2 * t, 2 * t + 1]).collect()),
            Protocol::Mnist2T => Some(vec![(0..5).collect(), (5..10).collect()]),
            Protocol::Fmnist4T => Some((0..4).map(|t| vec![2 * t, 2 * t + 1]).collect()),
            _ => None,
        }
    }

    /// The network shape used for this protocol unless overridden.
    pub fn default_arch(&self) -> NetworkArch {
        match self {
            Protocol::Blobs2T | Protocol::Blobs3T | Protocol::BlobsDrift => {
                NetworkArch::small(2, vec![32], 8)
            }
            Protocol::Mnist5T | Protocol::Mnist2T => NetworkArch::mlp100(),
            _ => NetworkArch::deep_image(),
        }
    }

    pub fn build_stream(&self, opts: &StreamOptions) -> Result<TaskStream> {
        match self {
            Protocol::Blobs2T => build_blobs("blobs2T", &blobs::two_task(), opts),
            Protocol::Blobs3T => build_blobs("blobs3T", &blobs::three_task(), opts),
            Protocol::BlobsDrift => build_blobs("blobsDrift", &blobs::drifting(), opts),
            Protocol::Permuted { tasks } => build_permuted(*tasks, opts),
            _ => build_partitioned(self, opts),
        }
    }
}

fn require_data_dir<'a>(opts: &'a StreamOptions, proto: &Protocol) -> Result<&'a Path> {
    opts.data_dir.as_deref().ok_or_else(|| {
        Error::Data(format!(
            "protocol {proto} needs image data; pass --data-dir or set ICLA_DATA_DIR"
        ))
    })
}

fn build_blobs(name: &str, tasks: &[blobs::BlobTask], opts: &StreamOptions) -> Result<TaskStream> {
    let mut rng = seed::rng_for(opts.run_seed, "blob-data", 0);
    let stream = blobs::make_blob_stream(name, tasks, &mut rng)?;
    subsample_stream(stream, opts)
}

fn build_partitioned(proto: &Protocol, opts: &StreamOptions) -> Result<TaskStream> {
    let dir = require_data_dir(opts, proto)?;
    let dataset = proto.dataset().unwrap();
    let ((train_x, train_y), (test_x, test_y)) = idx::load_split(dir, dataset)?;
    let groups = proto.class_partition().unwrap();
    let name = proto.to_string();
    let mut pairs = Vec::with_capacity(groups.len());
    for (t, group) in groups.iter().enumerate() {
        let train = take_classes(&train_x, &train_y, group, format!("{name}-task{}-train", t + 1))?;
        let test = take_classes(&test_x, &test_y, group, format!("{name}-task{}-test", t + 1))?;
        pairs.push((train, test));
    }
    subsample_stream(TaskStream::new(name, pairs)?, opts)
}

fn build_permuted(tasks: usize, opts: &StreamOptions) -> Result<TaskStream> {
    let proto = Protocol::Permuted { tasks };
    let dir = require_data_dir(opts, &proto)?;
    let ((train_x, train_y), (test_x, test_y)) = idx::load_split(dir, "mnist")?;
    let dim = train_x.cols();
    let name = proto.to_string();
    let mut pairs = Vec::with_capacity(tasks);
    for t in 1..=tasks {
        let digits: Vec<usize> = (0..2 * t).collect();
        // Task 1 keeps the pixels as-is; later tasks reshuffle them.
        let perm: Vec<usize> = if t == 1 {
            (0..dim).collect()
        } else {
            let mut p: Vec<usize> = (0..dim).collect();
            p.shuffle(&mut seed::rng_for(opts.protocol_seed, "pixel-perm", t as u64));
            p
        };
        let train = take_classes(&train_x, &train_y, &digits, format!("{name}-task{t}-train"))?;
        let test = take_classes(&test_x, &test_y, &digits, format!("{name}-task{t}-test"))?;
        let train = TaskDataset::new(train.name.clone(), permute_columns(&train.inputs, &perm), train.labels)?;
        let test = TaskDataset::new(test.name.clone(), permute_columns(&test.inputs, &perm), test.labels)?;
        pairs.push((train, test));
    }
    subsample_stream(TaskStream::new(name, pairs)?, opts)
}

fn take_classes(x: &Matrix, y: &[usize], classes: &[usize], name: String) -> Result<TaskDataset> {
    let rows: Vec<usize> = y
        .iter()
        .enumerate()
        .filter_map(|(i, l)| classes.contains(l).then_some(i))
        .collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("{name}: no samples for classes {classes:?}")));
    }
    let labels = rows.iter().map(|&i| y[i]).collect();
    TaskDataset::new(name, x.select_rows(&rows), labels)
}

fn permute_columns(x: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let src = x.row(i);
        let dst = out.row_mut(i);
        for (j, &p) in perm.iter().enumerate() {
            dst[j] = src[p];
        }
    }
    out
}

fn subsample_stream(stream: TaskStream, opts: &StreamOptions) -> Result<TaskStream> {
    if opts.data_fraction == 1.0 {
        return Ok(stream);
    }
    let name = stream.name.clone();
    let mut pairs = Vec::with_capacity(stream.tasks.len());
    for task in stream.tasks {
        let mut rng = seed::rng_for(opts.protocol_seed, "subsample", task.index as u64);
        let train = task.train.subsample(opts.data_fraction, &mut rng)?;
        let test = task.test.subsample(opts.data_fraction, &mut rng)?;
        pairs.push((train, test));
    }
    TaskStream::new(name, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for name in PROTOCOL_NAMES {
            let p: Protocol = name.parse().unwrap();
            assert_eq!(&p.to_string(), name);
        }
        assert!("mnist3T".parse::<Protocol>().is_err());
        assert!("permuted9T".parse::<Protocol>().is_err());
    }

    #[test]
    fn blob_protocols_build_without_data_dir() {
        let stream = Protocol::Blobs3T.build_stream(&StreamOptions::default()).unwrap();
        assert_eq!(stream.num_tasks(), 3);
        assert_eq!(stream.total_classes(), 6);
        assert_eq!(stream.input_dim, 2);
    }

    #[test]
    fn image_protocols_demand_a_data_dir() {
        let err = Protocol::Mnist9T.build_stream(&StreamOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn partitions_match_expectations() {
        assert_eq!(Protocol::Mnist9T.class_partition().unwrap().len(), 9);
        assert_eq!(Protocol::Mnist9T.class_partition().unwrap()[0], vec![0, 1]);
        assert_eq!(Protocol::Mnist9T.class_partition().unwrap()[8], vec![9]);
        assert_eq!(Protocol::Mnist2T.class_partition().unwrap()[1], vec![5, 6, 7, 8, 9]);
        assert_eq!(Protocol::Fmnist4T.class_partition().unwrap()[3], vec![6, 7]);
    }

    #[test]
    fn blob_subsample_respects_fraction() {
        let opts = StreamOptions { data_fraction: 0.5, ..Default::default() };
        let full = Protocol::Blobs2T.build_stream(&StreamOptions::default()).unwrap();
        let half = Protocol::Blobs2T.build_stream(&opts).unwrap();
        assert_eq!(half.tasks[0].train.len(), full.tasks[0].train.len() / 2);
    }

    /// Permuted streams built against a synthetic IDX directory: checks the
    /// digit schedule, identity first task, and cross-task permutation drift.
    #[test]
    fn permuted_stream_schedule_and_identity_first_task() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir(root.join("mnist")).unwrap();
        let paths = idx::split_paths(root, "mnist");

        // 4 pixels per image; one image per digit 0..6, value pattern unique per digit.
        let n = 12u32;
        let mut imgs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n as u8 {
            let d = i % 6;
            imgs.extend_from_slice(&[d * 10, d * 10 + 1, d * 10 + 2, d * 10 + 3]);
            labels.push(d);
        }
        for (img_path, lab_path) in [(&paths.train_images, &paths.train_labels), (&paths.test_images, &paths.test_labels)] {
            let mut f = std::fs::File::create(img_path).unwrap();
            f.write_all(&idx::IMAGE_MAGIC.to_be_bytes()).unwrap();
            f.write_all(&n.to_be_bytes()).unwrap();
            f.write_all(&2u32.to_be_bytes()).unwrap();
            f.write_all(&2u32.to_be_bytes()).unwrap();
            f.write_all(&imgs).unwrap();
            let mut f = std::fs::File::create(lab_path).unwrap();
            f.write_all(&idx::LABEL_MAGIC.to_be_bytes()).unwrap();
            f.write_all(&n.to_be_bytes()).unwrap();
            f.write_all(&labels).unwrap();
        }

        let opts = StreamOptions { data_dir: Some(root.to_path_buf()), ..Default::default() };
        let stream = Protocol::Permuted { tasks: 3 }.build_stream(&opts).unwrap();
        assert_eq!(stream.num_tasks(), 3);
        assert_eq!(stream.tasks[0].train.class_set, [0, 1].into_iter().collect());
        assert_eq!(stream.tasks[1].train.class_set, [0, 1, 2, 3].into_iter().collect());
        assert_eq!(stream.tasks[2].train.class_set, [0, 1, 2, 3, 4, 5].into_iter().collect());
        assert_eq!(stream.tasks[1].old_classes, vec![0, 1]);
        assert_eq!(stream.tasks[2].new_classes, vec![4, 5]);

        // Task 1 pixels are untouched: digit 0 row is [0,1,2,3]/255.
        let t1 = &stream.tasks[0].train;
        let row = t1.labels.iter().position(|&l| l == 0).unwrap();
        let expect: Vec<f64> = [0.0, 1.0, 2.0, 3.0].iter().map(|v| v / 255.0).collect();
        assert_eq!(t1.inputs.row(row), &expect[..]);

        // Later tasks apply a real permutation: same digit, same multiset of
        // pixels, different order (with overwhelming probability for dim 4 we
        // at least check it's a permutation of the original).
        let t2 = &stream.tasks[1].train;
        let row2 = t2.labels.iter().position(|&l| l == 0).unwrap();
        let mut sorted = t2.inputs.row(row2).to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, expect);

        // Same options → identical stream (permutations derive from the
        // protocol seed, not the run seed).
        let again = Protocol::Permuted { tasks: 3 }.build_stream(&opts).unwrap();
        assert_eq!(stream.tasks[1].train.inputs, again.tasks[1].train.inputs);
        let other_run = StreamOptions { run_seed: 99, ..opts.clone() };
        let third = Protocol::Permuted { tasks: 3 }.build_stream(&other_run).unwrap();
        assert_eq!(stream.tasks[1].train.inputs, third.tasks[1].train.inputs);
    }
}
