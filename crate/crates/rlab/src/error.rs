use std::io;
use std::path::PathBuf;

/// Everything the tool can fail with. Each class maps to its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed dataset file: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("data: {0}")]
    Data(String),
    #[error("every instance diverged: {0}")]
    AllDiverged(String),
    #[error("external trainer: {0}")]
    External(String),
    #[error(transparent)]
    Core(#[from] rlab_core::Error),
    #[error("report: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const DIVERGED: i32 = 4;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Io { .. } | Error::Format { .. } | Error::Data(_) => exit::DATA,
            Error::AllDiverged(_) => exit::DIVERGED,
            Error::Core(rlab_core::Error::Catalogue(_)) => exit::CONFIG,
            Error::Core(_) | Error::External(_) | Error::Report(_) => exit::OTHER,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Report(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Report(e.to_string())
    }
}
