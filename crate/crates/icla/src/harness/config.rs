//! Experiment configuration: the TOML schema, validation, and the canonical
//! hash that names output directories.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::protocols::{Protocol, StreamOptions};
use crate::error::{Error, Result};
use crate::gmm::GmmConfig;
use crate::model::NetworkArch;
use crate::nn::adam::AdamHyper;
use crate::seed::fnv1a64;
use crate::trainer::{Strategy, TrainConfig};

/// Environment variable consulted when `data_dir` is not set explicitly.
pub const DATA_DIR_ENV: &str = "ICLA_DATA_DIR";

/// One experiment: a protocol, a strategy, and every knob either needs.
/// Unknown keys are rejected so typos fail loudly instead of running a
/// subtly different experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub protocol: String,
    pub strategy: String,
    pub seeds: Vec<u64>,
    pub epochs_per_task: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Reconstruction weight.
    pub gamma: f64,
    /// Alignment weight.
    pub lambda: f64,
    /// Pseudo-sample confidence threshold.
    pub tau: f64,
    /// 0 means auto: min(1000, smallest per-class count of the current task).
    pub pseudo_per_class: usize,
    pub max_attempt_factor: usize,
    pub swd_projections: usize,
    pub buffer_capacity: usize,
    /// Estimate diagonal covariances instead of full ones.
    pub diagonal_covariance: bool,
    /// Override the protocol's default hidden layer sizes.
    pub hidden_sizes: Option<Vec<usize>>,
    /// Override the protocol's default embedding width.
    pub embedding_dim: Option<usize>,
    /// Where IDX datasets live; falls back to $ICLA_DATA_DIR.
    pub data_dir: Option<String>,
    /// Per-class training subsample fraction in (0, 1].
    pub data_fraction: f64,
    /// Seeds protocol-level randomness (pixel permutations, subsampling)
    /// shared by every run seed.
    pub protocol_seed: u64,
    pub output_dir: String,
    /// Keep per-task mixtures and embedding snapshots for the audit.
    pub snapshots: bool,
    /// Continue a previous run from its latest checkpoint.
    pub resume: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: "blobs2T".to_string(),
            strategy: "icla".to_string(),
            seeds: vec![1],
            epochs_per_task: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            gamma: 1.0,
            lambda: 0.1,
            tau: 0.9,
            pseudo_per_class: 0,
            max_attempt_factor: 20,
            swd_projections: 50,
            buffer_capacity: 100,
            diagonal_covariance: false,
            hidden_sizes: None,
            embedding_dim: None,
            data_dir: None,
            data_fraction: 1.0,
            protocol_seed: 0,
            output_dir: "runs".to_string(),
            snapshots: true,
            resume: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol()?;
        self.strategy()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".to_string()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".to_string()));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(Error::Config(format!("data_fraction {} outside (0, 1]", self.data_fraction)));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".to_string()));
        }
        if let Some(f) = self.embedding_dim {
            if f == 0 {
                return Err(Error::Config("embedding_dim must be positive".to_string()));
            }
        }
        // Training-level knobs share the trainer's validation.
        self.train_config(0).map(|_| ())
    }

    pub fn protocol(&self) -> Result<Protocol> {
        self.protocol.parse()
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy.parse()
    }

    /// The network used for this experiment: the protocol default with any
    /// explicit overrides applied.
    pub fn arch(&self) -> Result<NetworkArch> {
        let mut arch = self.protocol()?.default_arch();
        if let Some(h) = &self.hidden_sizes {
            arch.hidden = h.clone();
        }
        if let Some(f) = self.embedding_dim {
            arch.embedding_dim = f;
        }
        Ok(arch)
    }

    /// Per-run trainer knobs, bound to one run seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            adam: AdamHyper {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            epochs_per_task: self.epochs_per_task,
            batch_size: self.batch_size,
            gamma: self.gamma,
            lambda: self.lambda,
            tau: self.tau,
            pseudo_per_class: self.pseudo_per_class,
            max_attempt_factor: self.max_attempt_factor,
            swd_projections: self.swd_projections,
            buffer_capacity: self.buffer_capacity,
            gmm: GmmConfig { diagonal: self.diagonal_covariance, ..GmmConfig::default() },
            seed,
            keep_snapshots: self.snapshots,
        };
        // Cheapest validation: the trainer rejects what it cannot run.
        crate::trainer::validate_config(&cfg)?;
        Ok(cfg)
    }

    /// Stream construction options for one run seed.
    pub fn stream_options(&self, run_seed: u64) -> StreamOptions {
        StreamOptions {
            data_dir: self.resolved_data_dir(),
            data_fraction: self.data_fraction,
            protocol_seed: self.protocol_seed,
            run_seed,
        }
    }

    /// Explicit `data_dir`, else $ICLA_DATA_DIR, else none.
    pub fn resolved_data_dir(&self) -> Option<PathBuf> {
        if let Some(d) = &self.data_dir {
            return Some(PathBuf::from(d));
        }
        std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
    }

    /// Canonical serialization used for hashing and for the copy written
    /// into the output directory.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the scientific content of the experiment. Fields that do not
    /// change the result — where outputs go, where data lives, whether we
    /// resume — are normalized away, so re-running after moving data finds
    /// the same directory.
    pub fn config_hash(&self) -> u64 {
        let mut c = self.clone();
        c.output_dir = String::new();
        c.data_dir = None;
        c.resume = false;
        fnv1a64(c.canonical_toml().as_bytes())
    }

    /// `<protocol>-<strategy>-<hash12>`, the run directory's basename.
    pub fn run_dir_name(&self) -> String {
        format!("{}-{}-{:012x}", self.protocol, self.strategy, self.config_hash() & 0xffff_ffff_ffff)
    }

    /// Full output directory for this experiment.
    pub fn run_dir(&self) -> PathBuf {
        Path::new(&self.output_dir).join(self.run_dir_name())
    }
}
