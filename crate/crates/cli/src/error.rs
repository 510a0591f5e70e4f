use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const NOT_CONVERGED: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qthermo::Error),
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("not converged: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::Core(qthermo::Error::Config(message.into()))
    }

    pub fn exit_code(&self) -> i32 {
        use qthermo::Error as E;
        match self {
            Self::Core(E::Config(_) | E::Structural(_) | E::Domain(_) | E::Contract(_)) => exit::CONFIG,
            Self::Core(E::Numerical(_) | E::NumericalIntegrity(_) | E::Resource(_)) => exit::NUMERICAL,
            Self::Parse { .. } => exit::CONFIG,
            Self::Io { .. } => exit::CONFIG,
            Self::Verification(_) => exit::NUMERICAL,
            Self::NotConverged(_) => exit::NOT_CONVERGED,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
