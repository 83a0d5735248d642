//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DrcError {
    #[error("grid index {index} out of range for grid with {points} points")]
    IndexOutOfRange { index: usize, points: usize },

    #[error("nonpositive weight {value} at grid index {grid_index}, item {item}")]
    NonPositiveWeight {
        grid_index: usize,
        item: usize,
        value: f64,
    },

    #[error("delta {delta} below 1/2: the neighborhood may be empty for some t")]
    DeltaTooSmall { delta: f64 },

    #[error("query time {t} outside [0,1]")]
    TimeOutOfRange { t: f64 },

    #[error("no comparisons in the neighborhood of t={t} with delta={delta}")]
    NoComparisons { t: f64, delta: f64 },

    #[error("union graph at t={t}, delta={delta} is disconnected: strengths not identifiable")]
    Disconnected { t: f64, delta: f64 },

    #[error("full-grid union graph is disconnected: strengths never identifiable at any delta")]
    NeverIdentifiable,

    #[error("normalization d={d_norm} below max degree {d_max}: misconfigured p_delta")]
    NormalizationTooSmall { d_norm: f64, d_max: f64 },

    #[error("power iteration did not converge within {max_iter} iterations (residual {residual})")]
    NotConverged { max_iter: usize, residual: f64 },

    #[error("gradient descent did not converge within {max_iter} iterations (grad norm {grad_norm})")]
    MleNotConverged { max_iter: usize, grad_norm: f64 },

    #[error("directed graph of smoothed counts is not strongly connected")]
    NotStronglyConnected,

    #[error("kernel bandwidth {h} covers no grid point")]
    EmptyKernelWindow { h: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive definite even after jitter")]
    CovarianceNotPd,

    #[error("could not generate a connected union graph within {retries} retries")]
    RetriesExhausted { retries: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unsupported dataset file version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: String },

    #[error("dataset file checksum mismatch")]
    ChecksumMismatch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DrcError>;
