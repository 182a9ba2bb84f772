use thiserror::Error;

pub type Result<T> = std::result::Result<T, SweError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweError {
    #[error("configuration error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stability violated: dt = {dt:.6e} exceeds limit {limit:.6e} ({which})")]
    Stability { dt: f64, limit: f64, which: &'static str },

    #[error("blow-up at step {step}: {events} positivity clamp events exceed budget {budget}")]
    BlowUp { step: usize, events: usize, budget: usize },

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("trajectory error: {0}")]
    Trajectory(String),

    #[error("point ({x:.6}, {y:.6}) is outside the admissible interior: {msg}")]
    OutOfDomain { x: f64, y: f64, msg: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("linear solver did not converge: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SweError {
    fn from(e: std::io::Error) -> Self {
        SweError::Io(e.to_string())
    }
}

impl SweError {
    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        SweError::Config { field: field.into(), msg: msg.into() }
    }
}
