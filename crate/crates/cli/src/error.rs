use std::path::PathBuf;

use thiserror::Error;

/// Stable process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const MIXING: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
    pub const CORRUPT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] tudm::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Artifact {
        path: PathBuf,
        #[source]
        source: tudm::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attributes a core error raised while reading `path`.
    pub fn artifact(path: impl Into<PathBuf>, source: tudm::Error) -> Self {
        CliError::Artifact {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => exit::CONFIG,
            CliError::Core(e) => core_code(e),
            CliError::Artifact { source, .. } => match source {
                tudm::Error::Checkpoint(_) | tudm::Error::Csv(_) => exit::CORRUPT,
                e => core_code(e),
            },
        }
    }
}

fn core_code(e: &tudm::Error) -> i32 {
    match e {
        tudm::Error::Divergence(_) => exit::DIVERGENCE,
        tudm::Error::Checkpoint(_) => exit::CORRUPT,
        _ => exit::CONFIG,
    }
}
