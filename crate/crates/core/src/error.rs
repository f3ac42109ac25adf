use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a shape or range precondition.
    #[error("spec violation: {0}")]
    SpecViolation(String),

    /// A non-finite value showed up where only finite values are allowed.
    #[error("numeric fault in {context} at index {index}")]
    NumericFault { context: &'static str, index: usize },

    #[error("archive is empty")]
    EmptyArchive,

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::SpecViolation(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 1,
            _ => 2,
        }
    }
}

/// Returns a numeric fault naming the first non-finite entry, if any.
pub(crate) fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NumericFault { context, index }),
        None => Ok(()),
    }
}
