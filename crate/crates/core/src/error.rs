use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The variants are grouped by how the command-line front end reports them:
/// validation problems, numerical failures, plugin/protocol failures and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("plugin error in loop {loop_index}: {message}")]
    Plugin { loop_index: usize, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("plugin timed out after {0:?}")]
    PluginTimeout(std::time::Duration),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Size(_) | Error::Truncated { .. } | Error::Format(_) => 2,
            Error::Numerical(_) => 3,
            Error::Plugin { .. } | Error::Protocol(_) | Error::PluginTimeout(_) => 4,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
