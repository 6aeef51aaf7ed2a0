use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FairError>;

/// Errors raised by the library.
///
/// Variants split into two families: input/validation problems and
/// numerical failures. [`FairError::is_numerical`] tells them apart so
/// front ends can pick an exit status.
#[derive(Debug, Error)]
pub enum FairError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("protected column not binary: found {0} distinct values")]
    ProtectedNotBinary(usize),
    #[error("unparseable numeric cell `{value}` in column `{column}` (row {row})")]
    UnparseableCell { column: String, row: usize, value: String },
    #[error("group {0} is empty")]
    EmptyGroup(u8),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid group id {0}; expected 1 or 2")]
    InvalidGroup(u8),
    #[error("empty index set")]
    EmptyIndexSet,
    #[error("invalid fold plan: {0}")]
    InvalidFolds(String),
    #[error("hybrid requires binary labels")]
    HybridRequiresBinaryLabels,
    #[error("hybrid penalty has an empty label bucket (label {0:+})")]
    EmptyHybridBucket(i8),
    #[error("loss {loss} does not match task {task}")]
    LossTaskMismatch { loss: &'static str, task: &'static str },
    #[error("fold {fold} is missing group {group}; use stratified folds")]
    FoldMissingGroup { fold: usize, group: u8 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("singular normal equations; use gamma > 0")]
    SingularSystem,
    #[error("non-finite objective at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },
    #[error("constrained solve failed: {0}")]
    Constraint(String),
}

impl FairError {
    /// True for solver-side failures, false for bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, FairError::SingularSystem | FairError::NonFinite { .. } | FairError::Constraint(_))
    }
}
