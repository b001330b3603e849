use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Clap(#[from] clap::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] gpflow_core::Error),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use gpflow_core::Error as E;
        match self {
            CliError::Clap(e) if !e.use_stderr() => EXIT_OK,
            CliError::Usage(_) | CliError::Clap(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Core(
                E::InvalidGrid(_)
                | E::InvalidProblem(_)
                | E::InvalidConfig(_)
                | E::LengthMismatch { .. }
                | E::NonFinite { .. },
            ) => EXIT_USAGE,
            CliError::Core(_) => EXIT_NOT_CONVERGED,
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
