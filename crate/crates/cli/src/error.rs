use std::path::PathBuf;

/// Failures of a CLI command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("solver diverged: {0}")]
    Divergence(String),

    #[error("{failed} of {total} runs failed")]
    PartialBatch { failed: usize, total: usize },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Divergence(_) => 3,
            CliError::PartialBatch { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<gps_core::Error> for CliError {
    fn from(e: gps_core::Error) -> Self {
        use gps_core::Error as E;
        match e {
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            E::InvalidParameter(_) | E::Schedule(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
