use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config: {0}")]
    Config(String),
    #[error("validation failed\n{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] qred_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed run output: {0}")]
    Structural(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }

    /// 0 success, 1 I/O or malformed output, 2 invalid config, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Validation(_) => 2,
            Self::Core(qred_core::Error::Structural(_)) => 2,
            Self::Core(_) => 3,
            Self::Io { .. } | Self::Structural(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Validation("x".into()).exit_code(), 2);
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(qred_core::Error::Numeric("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(qred_core::Error::Precondition("x".into())).exit_code(), 3);
        assert_eq!(CliError::Structural("x".into()).exit_code(), 1);
    }
}
