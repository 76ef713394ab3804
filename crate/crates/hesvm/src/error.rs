use std::path::PathBuf;

/// Errors surfaced by commands. Each variant maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("level exhaustion: {0}")]
    LevelExhausted(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Core(hesvm_core::Error),
    #[error("{0}")]
    Other(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::MissingArtifact { .. } => 3,
            AppError::Mismatch(_) => 4,
            AppError::LevelExhausted(_) => 5,
            _ => 1,
        }
    }

    pub fn missing(path: impl Into<PathBuf>, hint: impl Into<String>) -> Self {
        AppError::MissingArtifact { path: path.into(), hint: hint.into() }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| AppError::Io { context, source }
    }
}

impl From<hesvm_core::Error> for AppError {
    fn from(e: hesvm_core::Error) -> Self {
        use hesvm_core::Error as E;
        match e {
            E::DigestMismatch => AppError::Mismatch("parameter digest differs from the loaded CKKS parameters".into()),
            E::LevelExhausted(m) => AppError::LevelExhausted(m),
            other => AppError::Core(other),
        }
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Other(format!("json: {e}"))
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Other(format!("csv: {e}"))
    }
}
