//! Crate-wide error type.

/// Errors produced by model evaluation, integration, analysis, and fitting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Parameter vector violates its invariants (negative rate, theta outside [0, 1], ...).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// State vector violates its invariants.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Configuration value out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Input data violates the series invariants (ordering, sign, range).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A closed-form expression is undefined for these parameters.
    #[error("degenerate denominator: {0}")]
    Degenerate(String),

    /// The integrator exhausted its step budget.
    #[error("step limit of {max_steps} exceeded at t = {t} days")]
    StepLimitExceeded { max_steps: usize, t: f64 },

    /// Adaptive step size shrank below the representable minimum.
    #[error("step size underflow at t = {t} days")]
    StepSizeUnderflow { t: f64 },

    /// The state became non-finite during integration.
    #[error("non-finite state at t = {t} days")]
    NonFiniteState { t: f64 },

    /// A trajectory sample left the admissible region beyond tolerance.
    #[error("state left the admissible region at t = {t} days (component {component} = {value})")]
    StateLeftDomain {
        t: f64,
        component: &'static str,
        value: f64,
    },

    /// Residual evaluation failed inside the least-squares loop.
    #[error("residual evaluation failed at parameter point {point:?}: {source}")]
    ResidualEval {
        point: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
