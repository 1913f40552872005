use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cholesky factorization failed even at the largest jitter the policy allows.
    #[error("{context}: matrix not positive definite after jitter {jitter:e}")]
    Numerical { context: String, jitter: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) | Error::Parse { .. } | Error::Config(_) => {
                ErrorClass::Validation
            }
            Error::Numerical { .. } | Error::Optimization(_) => ErrorClass::Numerical,
            Error::Io { .. } => ErrorClass::Io,
            Error::Stage { source, .. } => source.class(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Io => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_innermost_error() {
        let numerical = Error::Numerical {
            context: "k".into(),
            jitter: 1e-2,
        };
        assert_eq!(numerical.in_stage("fit").exit_code(), 3);
        assert_eq!(Error::Optimization("x".into()).exit_code(), 3);
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(
            Error::invalid("x").in_stage("a").in_stage("b").exit_code(),
            2
        );
        let io = Error::io("p", std::io::Error::other("x"));
        assert_eq!(io.exit_code(), 4);
    }
}
