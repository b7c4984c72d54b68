//! The `aswa` command-line tool.

pub mod args;
mod commands;
mod summary;

use std::fmt;
use std::path::Path;

use aswa_core::Exec;

pub use args::{Cli, Command};
pub use commands::{eval, gen_queries, qa, train};
pub use summary::{MeanStd, Summary, SCHEMA_VERSION};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<aswa_core::Error> for CliError {
    fn from(err: aswa_core::Error) -> Self {
        if err.is_numerical() {
            CliError::Numerical(err.to_string())
        } else if err.is_config() {
            CliError::Usage(err.to_string())
        } else {
            CliError::Data(err.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    match &cli.command {
        Command::Train(a) => train(a, exec).map(|s| println!("{}", summary::to_json(&s))),
        Command::Eval(a) => eval(a, exec),
        Command::GenQueries(a) => gen_queries(a),
        Command::Qa(a) => qa(a, exec),
    }
}

/// Sizes the global rayon pool from `ASWA_NUM_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("ASWA_NUM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "ASWA_NUM_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}
