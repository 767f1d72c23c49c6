use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("score list is empty")]
    EmptyScores,
    #[error("gamma must be strictly positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("score {index} is not finite ({value})")]
    NonFiniteScore { index: usize, value: f64 },
    #[error("index {index} out of range for {len} scores")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("differential pair at dim {dim} is not normalized: {plus} + {minus} != 1")]
    NotNormalized { dim: usize, plus: f64, minus: f64 },
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("labels must be binary: {0}")]
    NonBinaryLabels(String),
    #[error("dataset has a single class")]
    SingleClassData,
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("bad schema: {0}")]
    BadSchema(String),
    #[error("non-numeric value {value:?} in feature column {column:?} (row {row})")]
    NonNumericFeature {
        column: String,
        row: usize,
        value: String,
    },
    #[error("model input dimension is {0}, grid export needs 2")]
    DimNot2(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid cost parameters: {0}")]
    InvalidCostParams(String),
    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
