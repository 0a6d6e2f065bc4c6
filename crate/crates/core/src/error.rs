use thiserror::Error;

#[derive(Debug, Error)]
pub enum KsError {
    /// Input outside the domain of an operation (negative density, bad dimension, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("density identically negligible: no cell above the floor {floor:e}")]
    NegligibleDensity { floor: f64 },

    #[error("no first zero of the shooting solution before r = {horizon} (d = {dim}, gamma = {gamma})")]
    NoFirstZero { dim: usize, gamma: f64, horizon: f64 },

    #[error("formula inapplicable: {0}")]
    FormulaInapplicable(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Explicit step produced NaN or a negative overshoot; carries the last
    /// good state as CSV text so the caller can dump it.
    #[error("step failure at t = {t}: {reason}")]
    StepFailure {
        t: f64,
        reason: String,
        state_csv: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = KsError> = std::result::Result<T, E>;
