use std::path::PathBuf;

use evident_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvidentError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: byte {offset}: {detail}", path.display())]
    Format { path: PathBuf, offset: u64, detail: String },
    #[error("manifest sample '{sample}': {detail}")]
    Manifest { sample: String, detail: String },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("gradient check failed: {0}")]
    Gradcheck(String),
}

pub type Result<T, E = EvidentError> = std::result::Result<T, E>;

impl EvidentError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 I/O, 4 divergence, 5 incompatible, 6 gradcheck.
    pub fn exit_code(&self) -> u8 {
        match self {
            EvidentError::Config(_) => 2,
            EvidentError::Io { .. }
            | EvidentError::Format { .. }
            | EvidentError::Manifest { .. }
            | EvidentError::Json { .. } => 3,
            EvidentError::Incompatible(_) => 5,
            EvidentError::Gradcheck(_) => 6,
            EvidentError::Core(e) => match e {
                CoreError::Usage(_) | CoreError::Config(_) | CoreError::InvalidInput(_) => 2,
                CoreError::Divergence { .. } => 4,
                _ => 5,
            },
        }
    }
}
