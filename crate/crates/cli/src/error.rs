use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config {0}")]
    Config(String),

    #[error("artifact problem: {0}")]
    Artifact(String),

    #[error("output directory {0} is locked by another run")]
    Locked(String),

    #[error(transparent)]
    Core(#[from] fracobs::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("solve did not converge at N = {0}")]
    NotConverged(usize),

    #[error("{0} gating checks failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NotConverged(_) | CliError::ChecksFailed(_) => 2,
            _ => 1,
        }
    }
}
