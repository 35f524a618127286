use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("continuous-time parametrization undefined for alpha = 1")]
    AlphaOneContinuous,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite or divergent state at step {step}: |x| = {norm}")]
    Divergence { step: u64, norm: f64 },

    #[error("singular Gram matrix (least eigenvalue {min_eig:e})")]
    SingularGram { min_eig: f64 },

    #[error("nonpositive value {value} at point {index} in rate fit")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("not enough points: need {needed}, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },

    #[error("sample counts differ: {0} vs {1}")]
    SampleCountMismatch(usize, usize),

    #[error("coupling `{requested}` unavailable: {reason}")]
    CouplingUnavailable { requested: &'static str, reason: String },

    #[error("Brownian path mismatch: {0}")]
    PathMismatch(String),

    #[error("hypothesis check failed: {0}")]
    Hypothesis(String),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
