use std::path::PathBuf;

use thiserror::Error;

use crate::checkpoint::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value. `line` is 1-based when the value came from a file.
    #[error("config error{}: `{key}`: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        key: String,
        line: Option<usize>,
        msg: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("solver diverged at t={t}: {detail}")]
    SolverDivergence { t: f64, detail: String },

    /// Training produced a non-finite loss; carries the last checkpoint whose state was finite.
    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged {
        iteration: u64,
        detail: String,
        last_good: Box<Checkpoint>,
    },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line: None,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } | Error::NotFound(_) | Error::Format(_) | Error::Csv(_) => 3,
            Error::Numerical(_) | Error::SolverDivergence { .. } | Error::Diverged { .. } => 4,
            Error::Shape(_) | Error::Internal(_) => 1,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
