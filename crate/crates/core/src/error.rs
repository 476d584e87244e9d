use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input failed a structural or numerical precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Forward-only constructors were handed a reversed interval.
    #[error("time ordering error: t_b = {t_b} precedes t_a = {t_a} (use the adjoint instead)")]
    Ordering { t_a: f64, t_b: f64 },

    #[error("time {t} lies outside the propagator span [{lo}, {hi}]")]
    Span { t: f64, lo: f64, hi: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
