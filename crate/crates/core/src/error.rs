//! Error type shared across the simulator.

use thiserror::Error;

/// All failure modes surfaced by the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad ranges, unknown names, missing fields.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was queried on a detector state it does not apply to,
    /// e.g. the overvoltage of an open-circuit device or the bright-pulse
    /// control curve of a detector that is not blinded.
    #[error("misuse: {0}")]
    Misuse(String),

    /// A numeric argument was outside the operation's domain.
    #[error("domain violation: {0}")]
    Domain(String),

    /// An internal consistency check failed; indicates a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    /// File I/O failure while reading configuration or writing results.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed JSON in a configuration file or result document.
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn misuse(msg: impl Into<String>) -> Self {
        Error::Misuse(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
