//! Experiment orchestration: configuration files, multi-seed runs, CSV
//! emission, embedding dumps, and the forgetting audit.

pub mod audit;
pub mod config;
pub mod curve;
pub mod dump;
pub mod runner;

pub use audit::{audit_run_dir, write_audit, AuditReport, AuditRow};
pub use config::ExperimentConfig;
pub use curve::{Aggregate, CurveRow, LearningCurve};
pub use runner::{run_experiment, ExperimentOutcome, SeedPaths};
