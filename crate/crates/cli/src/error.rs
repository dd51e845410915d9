use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad key, bad value, or malformed input file.
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("run failed: {0}")]
    Run(#[from] bdsa::Error),

    #[error("{0} selftest check(s) failed")]
    Check(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Io { .. } => 2,
            Self::Run(_) | Self::Check(_) => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn range(key: &str, value: impl std::fmt::Display, expected: &str) -> Self {
        Self::Config(format!("invalid value for `{key}`: {value} (expected {expected})"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
