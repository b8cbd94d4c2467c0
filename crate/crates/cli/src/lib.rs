//! Command-line pipelines around `medsel`: simulate, fit, evaluate,
//! replicate and calibrate-lambda. Every output directory gets a JSON
//! manifest, and every file is written by atomic rename.

pub mod args;
pub mod commands;
pub mod error;
pub mod files;
pub mod manifest;
pub mod tables;

pub use commands::run;
pub use error::{CliError, Result};
