//! Experiment runner for `plasticity-core`.
//!
//! Reads TOML run configurations, drives the discrete strategies, the theorem
//! checks and the neural expanding-dataset protocol, and writes CSV and JSON
//! results. [`cli_main`] is the whole command line.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod runner;

pub use cli::cli_main;
pub use config::RunConfig;
pub use error::{LabError, Result};
