use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("taxonomy error: {0}")]
    Taxonomy(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("shape error: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("stratification error: subclass `{subclass}` has {count} samples, needs at least {needed}")]
    Stratification {
        subclass: String,
        count: usize,
        needed: usize,
    },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("synthetic spec error at `{field}`: {message}")]
    SyntheticSpec { field: String, message: String },

    #[error("network spec error: {0}")]
    NetworkSpec(String),

    #[error("batch size error: batch norm in training mode needs at least 2 rows, got {0}")]
    BatchSize(usize),

    #[error("cache error: {0}")]
    Cache(String),

    #[error("numeric error: non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch:?})")]
    Diverged {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },

    #[error("center error: class `{0}` has no samples")]
    EmptyClass(String),

    #[error("solver did not converge after {iterations} iterations (duality gap {gap:.3e})")]
    SolverNonConvergence { iterations: usize, gap: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("model card error: {0}")]
    Card(String),

    #[error("checksum mismatch: card declares {declared}, payload hashes to {actual}")]
    Checksum { declared: String, actual: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Card(e.to_string())
    }
}
