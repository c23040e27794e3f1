//! Experiment runner around `tasksel_core`: configuration, run persistence,
//! the external-oracle file protocol and report tables.

pub mod config;
pub mod error;
pub mod extoracle;
pub mod format;
pub mod parallel;
pub mod pipeline;
pub mod report;

pub use config::{Mode, RunConfig};
pub use error::{CliError, CliResult, Phase};
pub use pipeline::{load_record, run_pipeline, RunOutcome, RunRecord};
