use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("repeated characteristic root at mode {mode}")]
    RepeatedRoot { mode: usize },

    #[error("unstable mode {mode}: max root real part {max_real} >= 0")]
    Instability { mode: usize, max_real: f64 },

    #[error("{lambda} lies in the spectrum (mode {mode})")]
    Spectrum { mode: usize, lambda: String },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("no contraction: q = {q} >= 1")]
    NoContraction { q: f64 },

    #[error("fixed-point iteration did not converge in {iterations} iterations (residual {residual})")]
    IterationBudget { iterations: usize, residual: f64 },

    #[error("horizon {horizon} shorter than the required truncation horizon {required}")]
    HorizonTooShort { horizon: f64, required: f64 },

    #[error("hypothesis {name} failed: {detail}")]
    HypothesisFailed { name: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
