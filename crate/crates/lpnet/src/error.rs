use std::io;
use std::path::PathBuf;

use crate::checkpoint::CheckpointError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}: {msg}")]
    Config { path: PathBuf, line: usize, msg: String },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value `{value}` for `{key}`: {msg}")]
    BadValue { key: String, value: String, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {msg}", path.display())]
    Image { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("{0}")]
    Data(String),
    #[error("{failed} of {total} files failed")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Core(#[from] lpnet_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 0 success, 1 usage or config, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        use lpnet_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::UnknownKey { .. } | CliError::BadValue { .. } => 1,
            CliError::Core(E::NonFiniteLoss { .. } | E::NonFiniteProbe { .. }) => 3,
            _ => 2,
        }
    }
}
