use thiserror::Error;

/// Errors raised by scenario validation, system assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("`{field}` has length {found}, expected {expected} (horizon)")]
    LengthMismatch {
        field: String,
        expected: usize,
        found: usize,
    },

    #[error("vector length {found} does not match system size {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("scenario mode is {found}, operation requires {expected}")]
    ModeMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("horizons differ: {left} vs {right}")]
    HorizonMismatch { left: usize, right: usize },

    #[error("net demand must be positive and finite, got {0}")]
    InvalidNetDemand(f64),

    #[error("solution has status {0:?}; a converged solution is required")]
    NotConverged(crate::solver::SolveStatus),

    #[error("best-response iteration did not converge after {sweeps} sweeps (last move {last_move:e})")]
    BestResponseDiverged { sweeps: usize, last_move: f64 },

    #[error(
        "analytic Jacobian disagrees with finite differences: max relative error {max_rel_error:e} at ({row}, {col})"
    )]
    JacobianMismatch { max_rel_error: f64, row: usize, col: usize },

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}
