//! Batch entry points for echolab: dataset synthesis, two-stage training,
//! streaming inference, evaluation and reproducibility checks.

pub mod commands;
pub mod config;
pub mod store;

pub use commands::{exit_code, run, Cli};
pub use config::ExperimentConfig;
