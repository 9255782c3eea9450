//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or malformed input.
    #[error("configuration error: {0}")]
    Config(String),
    /// Argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Model estimation failed (no events, rank deficiency, ...).
    #[error("estimation error: {0}")]
    Estimation(String),
    /// Monotone partial likelihood: no finite maximizer exists.
    #[error("separation: {0}")]
    Separation(String),
    /// Trial-selection weight estimation did not converge.
    #[error("weight estimation failed: {0}")]
    WeightNonConvergence(String),
    /// Scalar calibration could not bracket its target.
    #[error("calibration error: {0}")]
    Calibration(String),
    /// Too few usable replicates to summarize.
    #[error("summarization error: {0}")]
    Summarize(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
