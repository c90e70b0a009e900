use std::path::PathBuf;

/// Failures of the harness and the command line, each with a stable code.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] arcs_core::Error),
    #[error("{0}")]
    Selftest(String),
}

impl HarnessError {
    /// Short machine-readable code printed with every error.
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Data { .. } => "data",
            HarnessError::Core(arcs_core::Error::Config(_)) => "config",
            HarnessError::Core(arcs_core::Error::Calibration(_)) => "calibration",
            HarnessError::Core(_) => "simulation",
            HarnessError::Selftest(_) => "selftest",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        HarnessError::Data {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
