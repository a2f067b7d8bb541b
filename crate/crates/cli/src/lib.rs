//! Experiment driver: dataset generation, training runs, evaluation and
//! identifiability checks, each persisted as plain files.

pub mod commands;
pub mod config;

pub use config::ExperimentConfig;
