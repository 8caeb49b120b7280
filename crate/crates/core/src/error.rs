use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(
        "non-finite value at row {row}, column {column}; impute missing values before loading"
    )]
    NonFinite { row: usize, column: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-positive hessian: {0}")]
    NonPositiveHessian(String),

    #[error("singular normal equations{hint}")]
    Singular { hint: &'static str },

    #[error("training diverged at round {round}: non-finite margins")]
    Diverged { round: usize },

    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("invalid theory instance: {0}")]
    InvalidInstance(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("successive halving requires n0 >= {required} (eta^s_max), got {n0}")]
    TooFewConfigs { n0: usize, required: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error signals a broken internal invariant rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Diverged { .. } | Error::NonPositiveHessian(_))
    }
}
