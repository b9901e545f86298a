//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("header is missing required column `{column}`")]
    MissingColumn { column: String },

    #[error("no interaction records to build a matrix from")]
    EmptyRecords,

    #[error("index out of range: {what} {index} >= {bound}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("shape mismatch: {context} (got {got}, expected {expected})")]
    ShapeMismatch {
        context: &'static str,
        got: String,
        expected: String,
    },

    #[error("user {user} has too few non-interacted items: needs {needed}, has {available}")]
    NegativePoolTooSmall {
        user: u32,
        needed: usize,
        available: usize,
    },

    #[error("user {user} interacted with every item; cannot sample a negative")]
    UserHasAllItems { user: u32 },

    #[error("no users with interactions available for sampling")]
    NoInteractions,

    #[error("label {0} is not in {{0, 1}}")]
    InvalidLabel(f64),

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("non-finite score for user {user}, item {item}")]
    NonFiniteScore { user: u32, item: u32 },

    #[error("matrix is singular or not positive definite")]
    SingularMatrix,

    #[error("no users eligible for evaluation (every user has fewer than 2 interactions)")]
    NoTestedUsers,

    #[error("requested top-{requested} but only {available} candidate items exist")]
    NotEnoughCandidates { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("tuning budget {budget} is smaller than the initial design size {design}")]
    BudgetTooSmall { budget: usize, design: usize },

    #[error("parameter `{name}` out of bounds for the search space")]
    ParamOutOfBounds { name: String },

    #[error("snapshot is corrupt: {0}")]
    CorruptSnapshot(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
