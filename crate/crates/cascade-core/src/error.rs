//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the cascade engine and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A sentiment score was NaN or infinite.
    #[error("invalid sentiment score: {0}")]
    InvalidScore(String),

    /// A probability distribution failed validation.
    #[error("malformed distribution: {0}")]
    MalformedDistribution(String),

    /// Token-averaged entropy was requested for an empty token list.
    #[error("no label-related token distributions supplied")]
    NoLabelTokens,

    /// The auxiliary prediction-truth-difference estimate was invalid.
    #[error("invalid auxiliary uncertainty estimate: {0}")]
    InvalidEstimate(f64),

    /// An ensemble had fewer than two member predictions.
    #[error("ensemble variance needs at least 2 predictions, got {0}")]
    InsufficientEnsemble(usize),

    /// Uncertainty scores produced by different estimators were mixed.
    #[error("estimator mismatch: expected {expected}, found {found}")]
    EstimatorMismatch { expected: String, found: String },

    /// Calibration was attempted on an empty validation set.
    #[error("empty validation set")]
    EmptyValidationSet,

    /// A Gaussian fit was attempted on an empty value list.
    #[error("empty partition: {0}")]
    EmptyPartition(&'static str),

    /// A hyperparameter was outside its allowed range.
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    /// One calibration partition was empty, so no mean can be estimated.
    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    /// A numeric argument was NaN, infinite, or otherwise out of contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A model backend failed to answer.
    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend {
        message: String,
        attempts: u32,
        retryable: bool,
    },

    /// A replay backend had no stored record for the queried sample.
    #[error("no replay record for sample id '{0}'")]
    MissingRecord(String),

    /// A backend was asked for an operation it does not support.
    #[error("backend capability missing: {0}")]
    Capability(String),

    /// A model answer could not be parsed into a sentiment score.
    #[error("could not parse a sentiment score from model answer: {0:?}")]
    Parse(String),

    /// No prompt template exists for the requested dataset scale.
    #[error("unsupported dataset scale: {0}")]
    UnsupportedScale(String),

    /// A sample arrived with empty utterance text.
    #[error("sample text is empty")]
    EmptyText,

    /// A generator was asked for zero samples.
    #[error("sample count must be at least 1")]
    InvalidCount,

    /// Two aligned vectors had different lengths.
    #[error("length mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },

    /// A metric restricted to nonzero ground truths found none.
    #[error("no samples with nonzero ground truth")]
    EmptyEvaluationSet,

    /// A metric was applied to data from the wrong dataset scale.
    #[error("scale mismatch: {0}")]
    Scale(String),

    /// Pearson correlation is undefined when either vector has zero variance.
    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,

    /// Traces and ground truths could not be joined by sample id.
    #[error("trace/dataset join failed: {0}")]
    Join(String),

    /// A replay or artifact file violated its schema.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
