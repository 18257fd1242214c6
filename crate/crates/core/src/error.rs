use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the auditing engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },

    #[error("training diverged: loss became {loss} at epoch {epoch}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("transform `{transform}` failed on instance `{id}`: {reason}")]
    TransformFailure {
        transform: String,
        id: String,
        reason: String,
    },

    #[error("entropy estimates were computed on different splits ({left} vs {right})")]
    SplitMismatch { left: String, right: String },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("training pairs mix null and text inputs")]
    MixedRegime,

    #[error("predictor trained on text inputs cannot score a null input")]
    RegimeMismatch,

    #[error("output is empty after tokenization")]
    EmptyOutput,

    #[error("instance `{id}` is missing field `{field}`")]
    MissingField { id: String, field: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate id `{id}`")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },

    #[error("{path}:{line}: schema mismatch: {message}")]
    SchemaMismatch {
        path: String,
        line: usize,
        message: String,
    },

    #[error("degenerate split: {n_train} train / {n_eval} eval from {total} instances")]
    DegenerateSplit {
        total: usize,
        n_train: usize,
        n_eval: usize,
    },

    #[error("no PVI record for {count} instance(s), first `{first}`")]
    MissingPvi { count: usize, first: String },

    #[error("need at least {needed} examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corrupt serialized predictor: {0}")]
    Codec(String),

    #[error("adapter timed out waiting for `{cmd}`")]
    Timeout { cmd: String },

    #[error("adapter speaks `{got}`, expected `{expected}`")]
    VersionMismatch { expected: String, got: String },

    #[error("adapter error `{code}`: {message}")]
    Remote { code: String, message: String },

    #[error("adapter does not know model `{0}`")]
    UnknownModel(String),

    #[error("adapter protocol violation: {0}")]
    Protocol(String),

    // The cause is part of the message rather than a `source`, so error
    // chains do not print it twice.
    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
