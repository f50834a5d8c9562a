use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes by error class.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const INVALID_PARAMETER: u8 = 4;
    pub const MISSING_GRID: u8 = 5;
    pub const NUMERICAL: u8 = 6;
    pub const IO: u8 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("configuration has no [{0}] section")]
    MissingSection(String),
    #[error("configuration is missing `{0}`")]
    MissingKey(&'static str),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: windcov::Error },
}

impl CliError {
    pub fn stage(stage: &'static str) -> impl FnOnce(windcov::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    pub fn exit_code(&self) -> u8 {
        use windcov::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config { .. } | CliError::MissingSection(_) | CliError::MissingKey(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Stage { source, .. } => match source {
                E::MissingGridMetadata => exit::MISSING_GRID,
                E::FactorizationFailed { .. } => exit::NUMERICAL,
                E::Csv(_) | E::Json(_) | E::Io(_) | E::Table(_) => exit::IO,
                _ => exit::INVALID_PARAMETER,
            },
        }
    }
}
