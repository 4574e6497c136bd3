use std::path::PathBuf;

use thiserror::Error;

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Configuration or input problem.
pub const EXIT_CONFIG: i32 = 2;
/// A resource guard refused the run.
pub const EXIT_RESOURCE: i32 = 3;
/// The numerics failed.
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Config {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] dfsq::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Read { .. } | Self::Write { .. } => EXIT_CONFIG,
            Self::Core(e) => match e {
                dfsq::Error::TooLarge { .. } => EXIT_RESOURCE,
                dfsq::Error::Numerical(_) | dfsq::Error::Degeneracy { .. } | dfsq::Error::DimensionMismatch { .. } => {
                    EXIT_NUMERICAL
                }
                dfsq::Error::Validation(_) | dfsq::Error::Domain(_) | dfsq::Error::Resonance { .. } => EXIT_CONFIG,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
