use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Simulation(#[from] zeno_drag::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CampaignError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// Process exit status: 2 for configuration problems, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } | Self::MissingInput(_) => 3,
            Self::Simulation(zeno_drag::Error::Io(_)) => 3,
            Self::Simulation(
                zeno_drag::Error::InvalidConfig(_)
                | zeno_drag::Error::StabilityGuard { .. }
                | zeno_drag::Error::OutOfRange { .. },
            ) => 2,
            _ => 1,
        }
    }
}
