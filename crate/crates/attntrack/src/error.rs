use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("{0}")]
    Image(String),
    #[error("missing sequences: {}", .0.join(", "))]
    MissingSequences(Vec<String>),
    #[error(transparent)]
    Core(#[from] attntrack_core::Error),
}

impl CliError {
    /// Stable machine-readable class printed on failure.
    pub fn class(&self) -> &'static str {
        use attntrack_core::Error as E;
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
            CliError::Checkpoint { .. } => "checkpoint",
            CliError::Image(_) => "image",
            CliError::MissingSequences(_) => "missing-sequence",
            CliError::Core(e) => match e {
                E::NonFinite(_) => "divergence",
                E::Config(_) => "config",
                E::Shape { .. } | E::Index { .. } | E::Contract(_) => "internal",
                E::Input(_) => "input",
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
