use std::path::PathBuf;

use spillsense_core::{Error, ErrorClass};

pub type FailureResult<T> = Result<T, Failure>;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

/// Identity suite ran but a residual exceeded its tolerance.
pub const EXIT_IDENTITY: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_SIZE: u8 = 4;

impl Failure {
    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Failure::Parse { path: path.into(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Failure::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) => match e.class() {
                ErrorClass::Input => EXIT_INPUT,
                ErrorClass::Numeric => EXIT_NUMERIC,
                ErrorClass::Size => EXIT_SIZE,
            },
            Failure::Io { .. } | Failure::Parse { .. } | Failure::Usage(_) => EXIT_INPUT,
        }
    }
}
