use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid camera model: {0}")]
    Camera(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient track history: {0}")]
    InsufficientHistory(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("training failed in layer `{layer}`: {message}")]
    Training { layer: String, message: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
