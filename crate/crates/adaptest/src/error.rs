use std::path::PathBuf;

use adaptest_core::bank::Violation;

/// Errors from file handling, the CLI and the service.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] adaptest_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unknown keys {}", .keys.join(", "))]
    UnknownKeys { path: PathBuf, keys: Vec<String> },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True when the input, not the machinery, is at fault.
    pub fn is_validation(&self) -> bool {
        use adaptest_core::Error as C;
        match self {
            Error::Core(e) => !matches!(
                e,
                C::DegenerateInformation
                    | C::GridTruncation(_)
                    | C::DegenerateChains
                    | C::NonFiniteInit
                    | C::BankExhausted
                    | C::CoverageInfeasible { .. }
            ),
            Error::Parse { .. } | Error::UnknownKeys { .. } | Error::Invalid(_) => true,
            Error::Io { .. } | Error::Runtime(_) | Error::Usage(_) => false,
        }
    }

    /// Bank violations carried by this error, if any.
    pub fn violations(&self) -> &[Violation] {
        match self {
            Error::Core(adaptest_core::Error::InvalidBank(v)) => v,
            _ => &[],
        }
    }
}
