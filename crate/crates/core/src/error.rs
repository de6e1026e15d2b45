use std::path::{Path, PathBuf};

use palsyfuse_nn::NnError;
use thiserror::Error;

pub type Result<T, E = PalsyError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PalsyError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("image format error: {0}")]
    Image(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("modality unavailable: {0}")]
    ModalityUnavailable(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Nn(#[from] NnError),
}

impl PalsyError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PalsyError::Io { path: path.to_owned(), source }
    }

    /// Input and configuration problems, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PalsyError::Io { .. }
                | PalsyError::Parse { .. }
                | PalsyError::Schema(_)
                | PalsyError::Image(_)
                | PalsyError::Config(_)
                | PalsyError::Invalid(_)
                | PalsyError::ModalityUnavailable(_)
        )
    }
}
