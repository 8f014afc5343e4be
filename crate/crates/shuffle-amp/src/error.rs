//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// `Config` covers invalid user input (bad parameters, malformed config
/// files); `Numeric` covers failures of the numeric routines themselves
/// (non-converging searches, out-of-range intermediate values). The CLI maps
/// these to distinct process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameter value supplied by the caller.
    #[error("config error: {0}")]
    Config(String),

    /// A numeric routine failed to produce a trustworthy result.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// I/O failure while reading config or writing output.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
