use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incompatible bases")]
    IncompatibleBases,

    #[error("excluded predictor has nonzero coefficient (row {0})")]
    ExcludedNonzero(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("rank deficient design: {0}")]
    RankDeficient(String),

    #[error("design is not orthogonal (max deviation {0:e})")]
    NotOrthogonal(f64),

    #[error("all weights are infinite")]
    AllWeightsInfinite,

    #[error("smoothing failed for every candidate parameter")]
    SmoothingFailed,

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
