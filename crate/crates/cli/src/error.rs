use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sift_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("config file: {0}")]
    Config(String),

    #[error("hash mismatch for {path}: manifest has {expected}, file has {found}")]
    HashMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error("phase order: {0}")]
    PhaseOrder(String),

    #[error("replay of {manifest} produced different outputs: {files:?}")]
    ReplayMismatch { manifest: String, files: Vec<String> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::HashMismatch { .. } => "hash_mismatch",
            CliError::PhaseOrder(_) => "phase_order",
            CliError::ReplayMismatch { .. } => "replay_mismatch",
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let mut detail = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Core(sift_core::Error::NotConverged { curve, .. }) = self {
            detail["curve"] = json!(curve);
        }
        json!({ "error": detail }).to_string()
    }
}
