use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed partition, mapping or threshold configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input that could not be decoded (images, URLs, trial files).
    #[error("input error: {0}")]
    Input(String),

    /// A tabular input is missing a required column.
    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("build error: {0}")]
    Build(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("logistic fit did not converge after {iterations} iterations (residual sum of squares {rss:.6e})")]
    FitDiverged {
        iterations: usize,
        rss: f64,
        residuals: Vec<f64>,
    },

    #[error("query error: unexpected token `{token}`: {reason}")]
    Query { token: String, reason: String },

    #[error(
        "knowledge base fingerprint {found} does not match the active color configuration {expected}; rebuild the knowledge base with the current partitions and mapping"
    )]
    FingerprintMismatch { expected: String, found: String },

    #[error("unsupported knowledge base schema version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("fetch error for {url}: {reason}")]
    Fetch { url: String, reason: String },

    #[error("I/O error on {path}: {source}")]
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

    pub(crate) fn query(token: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Query {
            token: token.into(),
            reason: reason.into(),
        }
    }
}
