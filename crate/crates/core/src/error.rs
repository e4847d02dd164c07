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
    #[error("bad magic in {0}")]
    BadMagic(PathBuf),
    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("unrecognized answer {answer:?} for ({stimulus}, {label})")]
    Answer {
        stimulus: String,
        label: String,
        answer: String,
    },
    #[error("missing fixture entry for ({stimulus}, {label})")]
    MissingFixture { stimulus: String, label: String },
    #[error("backend error for ({stimulus}, {label}): {message}")]
    Backend {
        stimulus: String,
        label: String,
        message: String,
    },
    #[error("missing embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("label {0:?} degenerate, cannot balance")]
    DegenerateLabel(String),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degenerate regression: {0}")]
    Regression(String),
    #[error("geometry mismatch: {0}")]
    Mismatch(String),
    #[error("invalid chain: {0}")]
    Chain(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
