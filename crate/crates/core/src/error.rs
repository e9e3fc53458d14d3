use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor/layer shape violations; the message names expected vs. actual extents.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration (rejected before any computation starts).
    #[error("invalid config: {0}")]
    Config(String),

    /// Invalid argument to an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A trainable parameter had no gradient when the optimizer ran.
    #[error("missing gradient for parameter '{0}'")]
    MissingGradient(String),

    /// Training produced a non-finite loss and was aborted.
    #[error("non-finite loss {value} at epoch {epoch}, step {step}")]
    NonFinite {
        epoch: usize,
        step: usize,
        value: f64,
    },

    /// Checkpoint/manifest/raster container violations.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that indicate bad inputs/configuration rather than a
    /// runtime or numeric failure. CLI maps these to exit code 1, others to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape(_) | Error::Config(_) | Error::InvalidArgument(_) | Error::Format(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
