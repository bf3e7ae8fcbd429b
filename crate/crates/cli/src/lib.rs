//! Command-line front end: configuration files, CSV datasets, reports and
//! the `simulate`, `select` and `diagnose` commands.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod report;
pub mod select;
pub mod simulate;

pub use error::{CliError, Result};
