use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),

    #[error("coordinate has {got} dimensions, space has {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for dimension {dim} (cardinality {cardinality})")]
    IndexOutOfRange {
        dim: usize,
        index: usize,
        cardinality: usize,
    },

    #[error("search space size exceeds the machine word")]
    SpaceTooLarge,

    #[error("invalid workload `{name}`: {reason}")]
    InvalidWorkload { name: String, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("wilcoxon rank-sum needs at least 3 samples per group (got {0} and {1})")]
    TooFewSamples(usize, usize),

    #[error("no finite-cost samples to fit")]
    NoFiniteSamples,

    #[error("population is empty")]
    EmptyPopulation,

    #[error("task list is empty")]
    NoTasks,

    #[error("trial log is empty")]
    EmptyLog,

    #[error("trial log line {line}: {reason}")]
    BadLog { line: usize, reason: String },

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
