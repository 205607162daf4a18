//! Scenario files, the expression language, command orchestration and the
//! gallery of reference scenarios for `hjsys-core`.

pub mod commands;
pub mod expr;
pub mod gallery;
pub mod report;
pub mod scenario;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("scenario rejected: {0}")]
    AuditFatal(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: hjsys_core::Error,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown gallery scenario '{0}'")]
    UnknownGallery(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attaches scenario context to core errors.
pub(crate) trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for hjsys_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: what(),
            source,
        })
    }
}
