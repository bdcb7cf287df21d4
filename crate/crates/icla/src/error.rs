//! Crate-wide error type and the process exit codes the CLI maps it to.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (unknown keys, bad ranges, impossible quotas).
    #[error("config: {0}")]
    Config(String),

    /// Dataset problems: missing files, malformed IDX payloads, label/shape mismatches.
    #[error("data: {0}")]
    Data(String),

    /// Byte-level parse failure with the offset where it happened.
    #[error("parse failure in {source_name} at byte {offset}: {detail}")]
    Parse {
        source_name: String,
        offset: u64,
        detail: String,
    },

    /// Non-finite loss or gradient during training.
    #[error("numeric divergence: {0}")]
    Divergence(String),

    /// Pseudo-sample generation produced nothing for a class within its attempt budget.
    #[error("replay starvation: class {class} accepted 0 of {attempts} attempts (threshold {tau})")]
    Starvation { class: usize, attempts: usize, tau: f64 },

    /// A class that must participate in alignment never appeared.
    #[error("alignment: class {class} absent from {side} for an entire epoch")]
    Alignment { class: usize, side: &'static str },

    /// Mixture estimation failed (e.g. covariance stayed non-PD through ridge escalation).
    #[error("distribution estimation failed for class {class}: {detail}")]
    Estimation { class: usize, detail: String },

    /// Shape mismatch between tensors.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Audit could not be assembled from the run artifacts.
    #[error("audit: {0}")]
    Audit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI. 0 is success; 1 is the generic failure bucket.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Parse { .. } => 3,
            Error::Divergence(_) => 4,
            Error::Starvation { .. } => 5,
            _ => 1,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Error {
        Error::Shape { op, detail: detail.into() }
    }
}
