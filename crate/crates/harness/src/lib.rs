//! Experiment runner and command-line front end for `qdrive-core`.

pub mod cli;
pub mod config;
pub mod experiment;

pub use experiment::{run_experiment, ExperimentName, ExperimentResult, ExperimentSpec, Series};
