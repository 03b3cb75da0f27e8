//! Batch driver for GA-based EXAFS fitting: configuration, data loading and
//! artifact emission for the `exafs-ga` binary.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{Mode, RunConfig};
pub use run::{load_data, run, Artifact, RunOutput};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "EXAFS_GA_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    /// `location` is `file:line` when the offending line is known.
    #[error("config: {location}: {message}")]
    Config { location: String, message: String },
    #[error("{0}")]
    Run(#[from] exafs_ga::Error),
    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: exafs_ga::Error },
    #[error("io: {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub(crate) fn config_at(file: &str, line: usize, message: impl Into<String>) -> Self {
        let location = if line == 0 {
            file.to_string()
        } else {
            format!("{file}:{line}")
        };
        CliError::Config {
            location,
            message: message.into(),
        }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}
