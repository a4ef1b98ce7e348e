//! Command implementations behind the `dpattn` binary.
//!
//! Every command reads one JSON config, writes its artifacts into an output
//! directory and returns whether the run succeeded (certified). Outputs are a
//! pure function of the config.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

/// Version stamped into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] dpattn_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A requirement or certificate check failed; artifacts were still written.
    Failed,
}

impl Outcome {
    pub fn from_pass(passed: bool) -> Self {
        if passed {
            Outcome::Success
        } else {
            Outcome::Failed
        }
    }

    pub fn exit_code(self) -> ExitCode {
        match self {
            Outcome::Success => ExitCode::SUCCESS,
            Outcome::Failed => ExitCode::from(1),
        }
    }
}

/// Exit status for input, parse and I/O errors.
pub const EXIT_INPUT_ERROR: u8 = 2;
