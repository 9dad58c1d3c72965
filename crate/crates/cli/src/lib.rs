//! Operator surface: the `pixmimic` subcommands and the websocket gateway.

pub mod commands;
pub mod config;
pub mod gateway;

use std::process::ExitCode;

use pixmimic_core::Error;

pub use config::{ControlMode, EvalSplit, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for bad configuration or inputs, 2 for I/O failures, 3 for
    /// numeric failures during training.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Missing(_) => 1,
            CliError::Io(_) | CliError::Core(Error::Io(_)) => 2,
            CliError::Core(Error::Numeric(_)) => 3,
            CliError::Core(_) => 1,
        }
    }
}

pub fn exit_code(result: Result<(), CliError>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
