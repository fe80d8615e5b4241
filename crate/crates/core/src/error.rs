use std::path::PathBuf;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("schema error in {path}, row {row}: {message}")]
    Schema { path: PathBuf, row: usize, message: String },

    #[error("site {site}: dates not strictly increasing at row {row}")]
    NonMonotoneDates { site: String, row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid distribution parameters: {0}")]
    InvalidParams(String),

    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("sample contains a non-positive or non-finite value: {0}")]
    NonPositive(f64),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("k = {k} exceeds the {distinct} distinct values available")]
    TooFewDistinct { k: usize, distinct: usize },

    #[error("no convergence after {iterations} iterations: {context}")]
    NoConvergence { iterations: usize, context: String },

    #[error("site sets do not match: {0}")]
    SiteMismatch(String),

    #[error("missing input: {0}")]
    Missing(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::NoConvergence { .. } | Error::Degenerate(_) | Error::InvalidParams(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, row: usize, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), row, message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
