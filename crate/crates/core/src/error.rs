use std::path::PathBuf;

/// Errors produced by the picking toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A pick index lies outside the sample range of its gather.
    #[error("pick {pick} on trace {trace} outside sample range 0..{samples}")]
    PickOutOfRange {
        trace: usize,
        pick: i32,
        samples: usize,
    },

    /// A structural invariant of a domain type does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A configuration value is unusable (bad shape, bad ratio, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Two pieces of state that must agree do not.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// An operation was asked to work on an empty or degenerate domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A numeric computation produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Dataset splitting cannot satisfy the requested ratios.
    #[error("split error: {0}")]
    Split(String),

    /// Filesystem or format failure, with the offending path.
    #[error("I/O error at {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Io {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io_from(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
