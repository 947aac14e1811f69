//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty_dataset: operation requires at least one record")]
    EmptyDataset,

    #[error("radius_range: radius {radius_m} m outside supported range ({reason})")]
    RadiusRange { radius_m: f64, reason: String },

    #[error("bad_handle: row handle {0} is not indexed")]
    BadHandle(usize),

    #[error("empty_set: operation requires a nonempty point set")]
    EmptySet,

    #[error("empty_design: no rows satisfy the feature specification")]
    EmptyDesign,

    #[error("insufficient_data: {0}")]
    InsufficientData(String),

    #[error("schema_mismatch: {0}")]
    SchemaMismatch(String),

    #[error("degenerate_target: target vector is constant, R^2 undefined")]
    DegenerateTarget,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("model format version {found} not supported (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    WithContext {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::WithContext {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
