use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("invalid label schema: {0}")]
    InvalidSchema(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("not enough instances of class {class:?}: need {needed}, have {available}")]
    InsufficientClass {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("requested {requested} items but only {available} are available")]
    InsufficientPool { requested: usize, available: usize },

    #[error("unknown class name {0:?}")]
    UnknownClass(String),

    #[error("instance {0} has no gold label")]
    MissingGoldLabel(usize),

    #[error("class index {index} out of range for {num_classes} classes")]
    InvalidClass { index: usize, num_classes: usize },

    #[error("no tokens left after tokenization")]
    EmptyVocabulary,

    #[error("training set invalid: {0}")]
    InvalidTrainingSet(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("external classifier: {0}")]
    External(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("session {0} not found")]
    SessionNotFound(String),

    #[error("stale batch {submitted}: {}", match pending {
        Some(p) => format!("the pending batch is {p}"),
        None => "no batch is pending".to_string(),
    })]
    StaleBatch { submitted: u64, pending: Option<u64> },

    #[error("incomplete label set: missing ids {missing:?}, unexpected ids {unexpected:?}")]
    IncompleteLabels {
        missing: Vec<usize>,
        unexpected: Vec<usize>,
    },

    #[error("session is {0}, cannot accept labels")]
    SessionState(String),

    #[error("corrupt session store entry {path}: {reason}")]
    CorruptSession { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
