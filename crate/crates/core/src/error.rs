//! Error type shared across the crate.

use std::io;

use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its physical or mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or matrix shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A dataset file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The current iterate assigns zero probability to observed data.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// Every efficiency row fell below the response floor for this Fock index.
    #[error("uncertainty undefined for photon number {index}: all response terms below floor")]
    UndefinedUncertainty { index: usize },

    /// A chi-square fit cannot be formed from the supplied inputs.
    #[error("ill-posed fit: {0}")]
    IllPosedFit(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
