//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the ranking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at {path}:{line}: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("label references missing record: cve {cve_id}, commit {commit_id}")]
    DanglingLabel { cve_id: String, commit_id: String },

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("corpus has {n_cves} CVEs, need at least {n_folds} for {n_folds}-fold split")]
    TooFewCves { n_cves: usize, n_folds: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    ShapeMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("graph node {0} has no initial embedding")]
    MissingNodeInit(String),

    #[error("cannot build a pair prompt from the same commit {0}")]
    SameCommit(String),

    #[error("prompt scaffold ({reserved} tokens) and description exceed budget {budget}")]
    BudgetTooSmall { reserved: usize, budget: usize },

    #[error("llm client error: {0}")]
    Client(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("rate limited by remote service: {0}")]
    RateLimited(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("planned llm spend {estimate:.2} USD exceeds budget {budget:.2} USD")]
    BudgetExceeded { estimate: f64, budget: f64 },

    #[error("non-finite loss {loss} at epoch {epoch}; diagnostics: {diagnostics}")]
    NonFiniteLoss {
        loss: f64,
        epoch: usize,
        diagnostics: String,
    },

    #[error("ranking for cve {0} has no labeled patches")]
    MissingLabels(String),

    #[error("verdict bits ({bits}) and labels ({labels}) differ in length")]
    LengthMismatch { bits: usize, labels: usize },

    #[error("corpus invariant violated: {0}")]
    CorpusInvariant(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
