//! Command-line pipeline for the cqrlab experiments.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;

pub use error::{CliError, Result};
