use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected {expected} channel(s), got {actual}")]
    ChannelCount { expected: usize, actual: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("pyramid kind error: expected {expected}, got {actual}")]
    PyramidKind {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),

    #[error("inputs are not aligned: {0}")]
    Alignment(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-binary input: {0}")]
    NonBinary(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing composite term: {0}")]
    MissingTerm(&'static str),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("manifest line {line}: {message}")]
    ManifestSyntax { line: usize, message: String },

    #[error("manifest entry `{id}`: {message}")]
    ManifestEntry { id: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
