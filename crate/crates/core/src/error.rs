use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("bad magic bytes in model file")]
    BadMagic,

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("model file truncated while reading {0}")]
    Truncated(String),

    #[error("malformed model file: {0}")]
    Malformed(String),

    #[error("calibration has not been fitted")]
    UnfittedCalibration,

    #[error("corruption failed: {0}")]
    Corruption(String),

    #[error("validation set generation failed after {attempts} attempts: acceptance rate {rate:.4} ({accepted}/{attempts})")]
    Generation {
        accepted: usize,
        attempts: usize,
        rate: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
