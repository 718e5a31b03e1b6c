use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A library failure, labelled with the pipeline stage that hit it.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: oodlab_core::Error,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// 2 config, 3 numerical, 4 verification, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { source, .. } => match source {
                oodlab_core::Error::NumericalFailure(_) => 3,
                oodlab_core::Error::InvalidParameter(_) | oodlab_core::Error::Parse { .. } => 2,
                _ => 1,
            },
            CliError::Verification(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

/// Attaches a stage label to library errors.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for oodlab_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
