//! Config-driven experiment runner for guided diffusion sampling on
//! Gaussian mixtures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod calibrate;
pub mod config;
pub mod error;
pub mod field;
pub mod preset;
pub mod run;

pub use config::{load_config, ExperimentConfig};
pub use error::{CliError, CliResult};
