use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error in {path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("vocabulary hash mismatch: checkpoint has {expected}, vocabulary has {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("frozen tensor `{0}` changed during training")]
    FrozenTensorChanged(String),

    #[error("training did not reach accuracy {target} (best {best:.4}) after {epochs} epochs")]
    NotConverged {
        target: f64,
        best: f64,
        epochs: usize,
        curve: Vec<f64>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Numeric(_) => "numeric",
            Error::Index(_) => "index",
            Error::Contract(_) => "contract",
            Error::Format { .. } => "format",
            Error::DegenerateData(_) => "degenerate_data",
            Error::Empty(_) => "empty",
            Error::UnknownClass(_) => "unknown_class",
            Error::VocabMismatch { .. } => "vocab_mismatch",
            Error::FrozenTensorChanged(_) => "frozen_tensor_changed",
            Error::NotConverged { .. } => "not_converged",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}
