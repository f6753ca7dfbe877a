//! Command-line harness: configuration, result files and the subcommands.

pub mod commands;
pub mod config;
pub mod emit;

use std::fmt;

pub use commands::execute;
pub use emit::RunOutput;
pub use config::{parse_config, Cli, Command, RunConfig};

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numerical(bbm_lab::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bbm_lab::Error> for CliError {
    fn from(e: bbm_lab::Error) -> Self {
        match e {
            bbm_lab::Error::Config(m) => CliError::Usage(m),
            bbm_lab::Error::InvalidLaw(_) => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}
