use std::path::PathBuf;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Bad flags, a malformed or missing config file, or invalid parameters.
    #[error("{0}")]
    Config(String),
    #[error("cannot read {}: {source}", path.display())]
    MissingInput {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("no runs found under {}", .0.display())]
    NoRuns(PathBuf),
    #[error(transparent)]
    Core(#[from] noisebias_core::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl LabError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::MissingInput { .. } | LabError::NoRuns(_) => 1,
            LabError::Core(noisebias_core::Error::InvalidParameter(_)) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }
}
