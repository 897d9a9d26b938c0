//! Library behind the `emcomm` command: configuration, the train / eval /
//! dump commands and the grid-search runner.

pub mod config;
pub mod grid;
pub mod run;

use std::fmt;

pub use config::{ChannelKind, GameKind, OptimizerKind, RunConfig, KEYS};
pub use grid::{run_grid, GridOutcome, GridSpec};
pub use run::{cmd_dump, cmd_eval, cmd_train, prepare, EvalReport, Prepared, RunSummary};

/// A failed command. Validation errors are detected before any work starts
/// and exit with status 1; runtime failures exit with status 2.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn validation(e: impl fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    pub(crate) fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}
