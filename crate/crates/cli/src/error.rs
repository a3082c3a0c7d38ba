use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// `line` is 0 for problems not tied to one line.
    #[error("{}", located(path, *line, msg))]
    Config { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fedcrypt::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// 2 for anything the user can fix by changing arguments or config,
    /// 1 for failures at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                fedcrypt::Error::InvalidParameter(_) | fedcrypt::Error::InsufficientGuardBits { .. } => 2,
                _ => 1,
            },
            CliError::Io { .. } | CliError::Output(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

fn located(path: &std::path::Path, line: usize, msg: &str) -> String {
    if line == 0 {
        format!("{}: {msg}", path.display())
    } else {
        format!("{}:{line}: {msg}", path.display())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
