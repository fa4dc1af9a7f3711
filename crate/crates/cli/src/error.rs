use std::path::PathBuf;

use serde_json::{json, Value};

use deconv_quant::report::SCHEMA_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: line {line}, column {column}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Library(#[from] deconv_quant::Error),
    #[error("{failed} of {total} cells failed")]
    CellsFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Invalid(_) => "invalid-argument",
            CliError::Library(e) => e.kind(),
            CliError::CellsFailed { .. } => "cells-failed",
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> Value {
        let mut err = json!({"kind": self.kind(), "message": self.to_string()});
        match self {
            CliError::Config {
                path, line, column, ..
            } => {
                err["path"] = json!(path.display().to_string());
                err["line"] = json!(line);
                err["column"] = json!(column);
            }
            CliError::Io { path, .. } => err["path"] = json!(path.display().to_string()),
            CliError::Library(deconv_quant::Error::MalformedSample { line, .. }) => {
                err["line"] = json!(line)
            }
            CliError::CellsFailed { failed, total } => {
                err["failed"] = json!(failed);
                err["total"] = json!(total);
            }
            _ => {}
        }
        json!({"schema_version": SCHEMA_VERSION, "error": err})
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
