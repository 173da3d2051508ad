use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("failed to parse {path}: {msg}")]
    SchemaParse { path: String, msg: String },

    #[error("invalid schema: {0}")]
    SchemaInvalid(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("header mismatch: expected column {expected:?} at position {position}, found {found:?}")]
    HeaderMismatch {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("row {row}, column {column:?}: {msg}")]
    BadCell {
        row: usize,
        column: String,
        msg: String,
    },

    #[error("column {column:?} has zero variance after mean-imputation")]
    ZeroVariance { column: String },

    #[error("column {column:?}: unseen category {value:?}")]
    UnseenCategory { column: String, value: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested {requested} rows but only {available} available")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("parameter sets are not shape-compatible: {0}")]
    ShapeIncompatible(String),

    #[error("non-finite loss ({loss}) at {context}")]
    NonFiniteLoss { loss: f64, context: String },

    #[error("{0}")]
    InvalidConfig(String),

    #[error("need {needed} rows ({detail}), table has {available}")]
    InsufficientRows {
        needed: usize,
        available: usize,
        detail: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("download failed: {0}")]
    Fetch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
