//! Experiment harness for conformal meta-learners: TOML configuration,
//! replicated runs over synthetic or CSV data, metrics, CSV reports and SVG
//! plots. The `cmeta` binary wraps it in a CLI.

pub mod config;
mod error;
pub mod experiment;
pub mod metrics;
pub mod plot;
pub mod report;

pub use config::{ExperimentConfig, Method};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, Experiment, RunResult};
