use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is outside its valid domain.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// A call received arguments that do not fit together (shapes, ranges).
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Idx(#[from] crate::data::IdxError),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// Training produced NaN or Inf values.
    #[error("numerical divergence: {0}")]
    Diverged(String),

    /// An engine invariant was violated. Indicates a bug, never bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration or input files.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Json { .. } | Error::Idx(_) | Error::Format { .. }
        )
    }
}
