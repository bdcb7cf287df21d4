//! Incremental class learning with generative embedding replay.
//!
//! The crate trains an autoencoder-classifier over a stream of tasks, each
//! introducing new classes. After every task a Gaussian mixture is fitted to
//! the embedding space (one component per class, closed-form MAP). When the
//! next task arrives, the mixture is sampled and decoded into pseudo-examples
//! that stand in for the data of earlier tasks, and a sliced Wasserstein
//! penalty keeps the embedding distribution of old classes from drifting.
//! Replay baselines (full replay, a fixed memory buffer, naive fine-tuning)
//! share the same training loop for comparison.
//!
//! Layout:
//! - [`nn`]: matrices, dense layers, losses, Adam, gradient checking
//! - [`model`]: the encoder/decoder/head network and its gradients
//! - [`gmm`]: per-class Gaussian mixtures over embeddings
//! - [`swd`]: sliced Wasserstein distance with gradients
//! - [`data`]: task streams (IDX image files, synthetic blobs, permutations)
//! - [`replay`]: pseudo-sample generation and replay buffers
//! - [`trainer`]: the per-task training loops for every strategy
//! - [`harness`]: experiment configs, multi-seed runner, CSV output, audits
//!
//! The `icla` binary is a thin CLI over [`harness`]; the examples directory
//! shows each capability on its own.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod model;
pub mod nn;
pub mod replay;
pub mod seed;
pub mod swd;
pub mod trainer;

pub use error::{Error, Result};
