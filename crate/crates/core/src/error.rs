use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NumericOverflow(&'static str),

    #[error("ill-conditioned polynomial: {0}")]
    Conditioning(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("eigenvalue iteration did not converge for matrix {0}")]
    EigenNonConvergence(String),

    #[error("integration diverged at step {step} (t = {time} us, |z| = {magnitude:e})")]
    Divergence {
        step: usize,
        time: f64,
        magnitude: f64,
    },

    #[error("undefined phase: trace has no signal")]
    UndefinedPhase,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
