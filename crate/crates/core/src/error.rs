//! Error type shared by every stage of the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Elimination hit a pivot below `1e-12 * ||A||_inf`.
    #[error(
        "matrix is singular (pivot {pivot:e} in column {column} below tolerance {tolerance:e})"
    )]
    SingularMatrix {
        column: usize,
        pivot: f64,
        tolerance: f64,
    },

    #[error("input b[{index}] = {value} lies outside the [-0.5, 0.5] signal range")]
    RangeViolation { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("coefficient {target} exceeds the quantizer range (max magnitude {max})")]
    OutOfRange { target: f64, max: f64 },

    #[error(
        "target conductance {conductance:e} S for path ({row}, {col}) outside device range [{g_min:e}, {g_max:e}]"
    )]
    TargetOutOfDeviceRange {
        row: usize,
        col: usize,
        conductance: f64,
        g_min: f64,
        g_max: f64,
    },

    #[error("eigenvalue iteration did not converge for a {dim}x{dim} state matrix")]
    EigenFailure { dim: usize },

    /// Neither orientation of the loop is stable and the Gram fallback is disabled.
    #[error("no stable orientation: max real eigenvalue {max_re_eig:e} (planned), {negated_max_re_eig:e} (negated)")]
    UnstableSystem {
        max_re_eig: f64,
        negated_max_re_eig: f64,
    },

    #[error("row {row} has {paths} feedback paths; a single path is required")]
    MultiPathRow { row: usize, paths: usize },

    #[error("row {row} cannot be analysed as a first-order section: {reason}")]
    UnsupportedAcPath { row: usize, reason: String },

    #[error("no fundamental found near {f_signal} Hz")]
    NoFundamental { f_signal: f64 },

    #[error("malformed problem document: {0}")]
    Json(#[from] serde_json::Error),
}
