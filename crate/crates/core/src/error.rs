use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong inside the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field length {got} does not match grid with {expected} cells")]
    FieldShape { expected: usize, got: usize },

    #[error("motility evaluated at the singular point s = 0 with s0 = 0")]
    SingularEvaluation,

    #[error("Psi is not integrable at 0: m - k = {excess} <= -1 with s0 = 0")]
    NonIntegrable { excess: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("iterative solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("positivity lost at t = {t} after {retries} step-size halvings")]
    PositivityFailure { t: f64, retries: u32 },

    #[error("singular motility: s0 = 0 and min(v) = {min_v} at t = {t}")]
    SingularMotility { t: f64, min_v: f64 },

    #[error("config error{}: {message}", if path.is_empty() { String::new() } else { format!(" at `{path}`") })]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::FieldShape { .. } => "FieldShape",
            Error::SingularEvaluation => "SingularEvaluation",
            Error::NonIntegrable { .. } => "NonIntegrable",
            Error::Domain(_) => "DomainError",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::PositivityFailure { .. } => "PositivityFailure",
            Error::SingularMotility { .. } => "SingularMotility",
            Error::Config { .. } => "ConfigError",
            Error::Io { .. } => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
