use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{file}:{line}: field `{field}`: {message}")]
    Schema {
        file: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{file}:{line}: duplicate record (first seen on line {first})")]
    Duplicate {
        file: String,
        line: usize,
        first: usize,
    },

    #[error("missing required file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Mode(_) => 3,
            _ => 2,
        }
    }
}
