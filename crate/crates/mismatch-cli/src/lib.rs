//! Experiment harness behind the `mismatch` command-line tool.

pub mod config;
pub mod experiment;

pub use config::ExperimentConfig;
pub use experiment::{cell_seed, estimate_sigma0, run, RunSummary};
