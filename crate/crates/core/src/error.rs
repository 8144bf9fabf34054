use thiserror::Error;

/// Errors raised by the assimilation and causal-analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("covariance cannot be regularized: {0}")]
    SingularCovariance(String),

    #[error("observation Gramian is singular at t = {t} (condition estimate {condition:.3e})")]
    SingularObservationGramian { t: f64, condition: f64 },

    #[error("filter covariance at index {index} cannot be inverted")]
    SingularFilterCovariance { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing coefficient function `{0}`")]
    MissingCoefficient(String),

    #[error("hidden variable enters nonlinearly: {0}")]
    ConditionalLinearityViolation(String),

    #[error("cross-noise between target and non-target observations is nonzero ({value:.3e}) at t = {t}")]
    CrossNoiseViolation { t: f64, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("numerical blow-up at t = {t}: magnitude {value:.3e} exceeds cap")]
    NumericalBlowup { t: f64, value: f64 },

    #[error("burn-in {burn} is not shorter than the trajectory span {span}")]
    InvalidBurn { burn: f64, span: f64 },

    #[error("invalid observation partition: {0}")]
    InvalidPartition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
