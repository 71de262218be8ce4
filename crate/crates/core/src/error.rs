use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("proposal density is zero at x = {x} where the target is positive")]
    ProposalZeroAtSample { x: f64 },
    #[error("importance weight at x = {x} is not finite")]
    NonfiniteWeight { x: f64 },
    #[error("invalid mixture weights {weights:?}: free weights must be positive and sum to less than 1")]
    InvalidMixtureWeights { weights: Vec<f64> },
    #[error("parameter vector contains a non-finite entry: {theta:?}")]
    NonfiniteParameter { theta: Vec<f64> },
    #[error("adaptation diverged at iteration {t}: theta = {theta:?}")]
    IterationDiverged { t: usize, theta: Vec<f64> },
    #[error("scale parameter must be positive, got {0}")]
    NonpositiveScale(f64),
    #[error("curvature constant must be negative, got {0}")]
    NonnegativeCurvature(f64),
    #[error("sample {index} carries no mixture component index")]
    MissingComponentIndex { index: usize },
    #[error("all importance weights are zero")]
    ZeroWeights,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch of {got} samples is too small, need at least {need}")]
    InsufficientBatch { need: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid gain: {0}")]
    InvalidGain(String),
    #[error("invalid parameter box: {0}")]
    InvalidBox(String),
    #[error("adapter `{adapter}` cannot drive the `{family}` proposal family")]
    IncompatibleAdapter { adapter: String, family: String },
    #[error("target density integrates to {integral}, expected 1")]
    UnnormalizedTarget { integral: f64 },
    #[error("target has no exact sampler")]
    MissingOracleSampler,
    #[error("{failed} of {total} replications diverged")]
    TooManyDivergent { failed: usize, total: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
