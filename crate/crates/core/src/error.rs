//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the lab's data, model, and evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// A value violates a domain invariant (duplicate date, return <= -1, ...).
    #[error("invalid data: {0}")]
    Domain(String),

    /// Inputs that must share a date index do not.
    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("series too short: need {need}, have {have}")]
    TooShort { need: usize, have: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("singular system: {0}")]
    Singular(String),

    /// QP has no feasible point; carries the binding bound.
    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Environment step produced a non-positive net return.
    #[error("episode aborted at step {step}: net return {net} <= 0")]
    EpisodeAborted { step: usize, net: f64 },

    /// Ratio metrics are undefined on a zero-variance series.
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
