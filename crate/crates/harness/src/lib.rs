//! Experiment orchestration for the `pkd` simulator: configuration, seeded
//! end-to-end runs, sweeps, CSV tables and SVG plots.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::{ExperimentConfig, TaskSource, WorkerSource};
pub use pipeline::{run_once, run_with_artifacts, RunReport};
