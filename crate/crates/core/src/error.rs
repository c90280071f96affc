use std::path::PathBuf;

use crate::sparse::SparseCode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The L1 solver hit its iteration cap before the optimality conditions
    /// were met. `best` is the lowest-objective iterate seen.
    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    ConvergenceFailure {
        best: Box<SparseCode>,
        residual: f64,
        iterations: usize,
    },

    #[error("score system is under-determined; not connected to the anchor: {}", .methods.join(", "))]
    Underdetermined { methods: Vec<String> },

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
