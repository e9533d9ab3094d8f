use std::fmt;
use std::process::ExitCode;

/// Command outcome that is not success.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, paths or inputs. Exit code 2.
    Usage(String),
    /// The command ran but failed or a check did not hold. Exit code 1.
    Failed(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Failed(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failed(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<slrl_core::Error> for CliError {
    fn from(e: slrl_core::Error) -> Self {
        use slrl_core::Error as E;
        match e {
            E::Parameter(_) | E::Shape(_) | E::Format { .. } | E::Io { .. } => CliError::Usage(e.to_string()),
            other => CliError::Failed(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
