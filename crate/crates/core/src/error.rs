use std::path::PathBuf;

use thiserror::Error;

use crate::reconstruction::ReconstructionResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The solver hit its iteration limit. Carries the best iterate found.
    #[error(
        "solver did not converge after {iterations} iterations (KKT residual {kkt_residual:.3e})"
    )]
    NotConverged {
        iterations: usize,
        kkt_residual: f64,
        best: Box<ReconstructionResult>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::Io { .. } => 4,
            Error::Schema(_) | Error::Dimension(_) | Error::Parameter(_) => 5,
            Error::NotConverged { .. } => 6,
        }
    }
}
