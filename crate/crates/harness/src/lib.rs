//! Experiment driver for the neuromorphic ISAC simulator: dataset
//! generation, training, evaluation, parameter sweeps and spike traces, each
//! seeded and written as NISD, NISM or CSV files.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{ExperimentConfig, Scheme};
pub use error::{HarnessError, Result};
