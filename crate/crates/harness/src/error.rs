//! Error classes mapped to process exit codes.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// Bad flags, bad config file, invalid parameter values.
    Usage,
    /// Unreadable, inconsistent or tampered input data.
    Data,
    /// The command finished but some episodes or instances failed.
    Partial,
}

impl ExitClass {
    pub fn code(self) -> i32 {
        match self {
            ExitClass::Usage => 1,
            ExitClass::Data => 2,
            ExitClass::Partial => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: ExitClass,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        CliError {
            class: ExitClass::Usage,
            error: e.into(),
        }
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        CliError {
            class: ExitClass::Data,
            error: e.into(),
        }
    }

    pub fn partial(msg: impl Into<String>) -> Self {
        CliError {
            class: ExitClass::Partial,
            error: anyhow::anyhow!(msg.into()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class.code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Shorthand for classifying foreign errors at call sites.
pub trait Classify<T> {
    fn usage_err(self) -> CliResult<T>;
    fn data_err(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage_err(self) -> CliResult<T> {
        self.map_err(CliError::usage)
    }

    fn data_err(self) -> CliResult<T> {
        self.map_err(CliError::data)
    }
}
