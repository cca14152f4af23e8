use std::path::PathBuf;

/// Errors raised anywhere in the merging pipeline.
///
/// Variants are grouped by failure class so callers (the CLI in particular)
/// can map them onto a stable exit-code contract via [`Error::class`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad magic, unsupported version or unparsable header.
    #[error("format error: {0}")]
    Format(String),

    /// Header and payload disagree (byte counts, offsets, truncation).
    #[error("corrupt payload: {0}")]
    Corruption(String),

    /// Non-finite values or values violating a type invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two parameter maps that must share names and shapes do not.
    #[error("parameter maps are not aligned: {0}")]
    Alignment(String),

    /// An argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimension mismatch between a model and its input.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    /// A cached artifact does not match the run it is being used with.
    #[error("stale cache: {0}")]
    Staleness(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Coarse failure class, used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Usage,
    Consistency,
    Runtime,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Validation(_)
            | Error::Domain(_)
            | Error::Empty(_)
            | Error::Config(_) => ErrorClass::Usage,
            Error::Format(_)
            | Error::Corruption(_)
            | Error::Alignment(_)
            | Error::Shape(_)
            | Error::Staleness(_) => ErrorClass::Consistency,
            Error::Divergence(_) => ErrorClass::Runtime,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
