use thiserror::Error;

use crate::sampler::Diagnostics;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("prior family {priors} cannot be used with a {likelihood} likelihood")]
    PriorMismatch {
        priors: &'static str,
        likelihood: &'static str,
    },

    #[error("parameter vector has length {got}, layout expects {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("sampler initialisation failed: {0}")]
    Initialization(String),

    #[error("inference failed: {reason}")]
    InferenceFailure {
        reason: String,
        diagnostics: Box<Diagnostics>,
    },

    #[error("not enough draws for diagnostics: {0}")]
    InsufficientDraws(String),

    #[error("unknown tool id {0}")]
    UnknownTool(u32),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("tool {0} has no replacement event")]
    MissingReplacement(u32),

    #[error("results refer to different datasets")]
    DatasetMismatch,

    #[error("result schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error once context layers are peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
