//! Command-line front end for `fracfk`.

pub mod commands;
pub mod config;
pub mod experiments;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fracfk::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 2 for configuration, 3 for numerical, 4 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        use fracfk::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config { .. } | E::Domain(_) | E::Regime(_)) => 2,
            CliError::Core(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

pub use commands::run;
