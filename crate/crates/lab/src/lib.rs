//! Experiment runner for `dlab-core`: JSON configs, parallel ensembles,
//! CSV/SVG artifacts and a reproducibility manifest.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod config;
pub mod csvio;
pub mod error;
pub mod parallel;
pub mod runner;
pub mod svg;

pub use config::Config;
pub use error::{LabError, LabResult};
pub use runner::{run_experiment, RunOptions, RunOutcome};
