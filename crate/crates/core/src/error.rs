use std::path::PathBuf;

use thiserror::Error;

use crate::backends::BackendError;
use crate::scene_model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene: {}", summarize(.0))]
    InvalidScene(Vec<Violation>),

    #[error("orphan path {0:?}: parent path is missing")]
    OrphanPath(String),

    #[error("detail record at {path:?} has no {field}")]
    IncompleteRecord { path: String, field: &'static str },

    #[error("input text produced no usable content")]
    EmptyInput,

    #[error("cluster count {k} out of range 1..={n}")]
    BadK { k: usize, n: usize },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("malformed model output: {0}")]
    MalformedOutput(String),

    #[error("template library is empty")]
    EmptyLibrary,

    #[error("invalid template ({rule}): {detail}")]
    InvalidTemplate { rule: String, detail: String },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("path not found: {0:?}")]
    PathNotFound(String),

    #[error("path already exists: {0:?}")]
    PathExists(String),

    #[error("invalid edit: {0}")]
    InvalidEdit(String),

    #[error("stage order violation: cannot {action} at stage {stage}")]
    StageOrderViolation { stage: String, action: String },

    #[error("session not found: {0}")]
    NotFound(String),

    #[error("prompt is empty")]
    EmptyPrompt,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn template(rule: &str, detail: impl Into<String>) -> Self {
        Error::InvalidTemplate {
            rule: rule.to_string(),
            detail: detail.into(),
        }
    }

    /// Violations carried by this error, if it is a validation failure.
    pub fn violations(&self) -> &[Violation] {
        match self {
            Error::InvalidScene(v) => v,
            _ => &[],
        }
    }
}

fn summarize(violations: &[Violation]) -> String {
    let mut parts: Vec<String> = violations
        .iter()
        .take(3)
        .map(|v| format!("{} at {:?}", v.rule, v.path))
        .collect();
    if violations.len() > 3 {
        parts.push(format!("... {} more", violations.len() - 3));
    }
    parts.join("; ")
}
