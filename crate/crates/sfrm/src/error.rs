use std::path::PathBuf;

/// Errors surfaced by the std layer. Each maps to a process exit code:
/// 2 for bad input or configuration, 1 for failures at run time.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("input mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] sfrm_core::Error),
    #[error("{0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Read { .. } | Error::Parse { .. } | Error::Config(_) | Error::Mismatch(_) => 2,
            Error::Core(e) => match e {
                sfrm_core::Error::InvalidParameter { .. }
                | sfrm_core::Error::InsufficientPoints { .. }
                | sfrm_core::Error::ExhaustiveTooLarge { .. } => 2,
                _ => 1,
            },
            Error::Write { .. } | Error::Runtime(_) => 1,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}
