//! Crate-wide error type.

/// Errors produced by depth representation, training, evaluation, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two buffers that must agree in size do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A scalar argument violates its contract (non-positive anchor,
    /// negative depth, zero taper rate, bad fraction, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation that needs at least one element got none
    /// (empty anchor pool, evaluation with zero valid pixels, ...).
    #[error("empty input: {0}")]
    Empty(String),

    /// A depth/image/manifest/checkpoint file does not follow its format.
    /// The message names the file and, for line-oriented formats, the line.
    #[error("malformed {format}: {reason}")]
    Malformed { format: &'static str, reason: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: total loss is not finite")]
    Diverged { step: usize },

    /// Underlying file-system failure, annotated with the path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attach a path to a raw `std::io::Error`.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
