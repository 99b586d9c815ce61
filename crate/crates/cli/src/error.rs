use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("truncated trace: {0}")]
    Truncated(String),

    #[error("construction failed: {0}")]
    Construction(#[from] backforth_core::error::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 2 for unreadable or malformed input, 3 for failed constructions.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Truncated(_) | CliError::Io { .. } => 2,
            CliError::Construction(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
