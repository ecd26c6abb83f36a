use std::path::PathBuf;

/// Failures surfaced by the CLI, each with a fixed exit code.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cellfree_core::Error),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("CSV error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> SimError {
        let path = path.into();
        move |source| SimError::Io { path, source }
    }

    pub fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> SimError {
        let path = path.into();
        move |source| SimError::Csv { path, source }
    }

    /// 2 for configuration problems, 3 for numerical failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use cellfree_core::Error as E;
        match self {
            SimError::Config(_) => 2,
            SimError::Core(E::Config(_) | E::PilotsDoNotFit { .. } | E::CalibrationTooSmall { .. } | E::Plan(_)) => 2,
            SimError::Core(_) => 3,
            SimError::Io { .. } | SimError::Csv { .. } | SimError::Json(_) => 4,
        }
    }
}
