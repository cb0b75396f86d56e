//! Experiment driver library: configuration, workflows, and the run log
//! behind the `aptsep` binary.

pub mod config;
pub mod runlog;
pub mod workflows;

pub use config::{ExperimentConfig, ShotSetting};
pub use workflows::WorkflowError;
