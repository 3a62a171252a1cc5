use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: porelife::Error,
    },
    #[error("{0} element correction(s) failed; see the messages above")]
    PartialFailure(usize),
}

impl CliError {
    pub fn core(context: impl Into<String>) -> impl FnOnce(porelife::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Core { context, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::PartialFailure(_) => 3,
            CliError::Io { .. } => 1,
            CliError::Core { source, .. } => match source {
                porelife::Error::Degenerate(_) => 4,
                porelife::Error::Io(_) => 1,
                _ => 2,
            },
        }
    }
}
