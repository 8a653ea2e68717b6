//! Batch workflows behind the `geocheck` binary: corpus validation,
//! scenario runs and analysis. Each command returns a [`CliError`] whose
//! variant fixes the process exit code.

mod commands;
mod config;

use std::process::ExitCode;

pub use commands::{analyze, run, validate, AnalyzeArgs, AnalyzeReport, BackendSpec, RunArgs};
pub use config::Config;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Validation or analysis failed on readable input (exit 1).
    Failure(String),
    /// Unreadable input, unwritable output, bad configuration, unreachable backend (exit 2).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Failure(_) => ExitCode::from(1),
            CliError::Io(_) => ExitCode::from(2),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Failure(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}
