use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("index error: {0}")]
    Index(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("parse error in {path} at line {line}, column {column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("invalid file {path}: {msg}")]
    InvalidFile { path: String, msg: String },

    #[error("unsupported version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error("{what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("variant mismatch: expected {expected}, checkpoint holds {found}")]
    VariantMismatch { expected: String, found: String },

    #[error("kappa undefined: zero expected disagreement with nonzero observed disagreement")]
    UndefinedKappa,

    #[error("unknown layer {name:?}; retained layers: {}", available.join(", "))]
    UnknownLayer {
        name: String,
        available: Vec<String>,
    },

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    /// Usage/config class errors map to exit code 2 in the CLI; everything
    /// else is a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::InvalidInput(_)
                | Error::Config(_)
                | Error::VariantMismatch { .. }
                | Error::UnknownLayer { .. }
                | Error::Truncated { .. }
                | Error::Parse { .. }
                | Error::InvalidFile { .. }
                | Error::UnsupportedVersion { .. }
                | Error::Shape { .. }
                | Error::Io { .. }
        )
    }
}
