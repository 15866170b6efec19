use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numeric error in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    /// A user-facing configuration or task-spec problem; `field` names the culprit.
    #[error("invalid {field}: {detail}")]
    Spec { field: String, detail: String },

    #[error("eigenvalue iteration did not converge after {iterations} sweeps; matrix = {matrix}")]
    NoConvergence { iterations: usize, matrix: String },

    #[error("malformed {format} file: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn spec(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Spec { field: field.into(), detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by user input rather than a defect in this crate.
    pub fn is_user_error(&self) -> bool {
        matches!(self, Error::Spec { .. } | Error::Format { .. } | Error::Io { .. } | Error::Json(_))
    }
}
