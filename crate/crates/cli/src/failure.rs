use std::fmt;

use kdd_core::Error;

/// Process exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Other = 1,
    Usage = 2,
    Config = 3,
    Io = 4,
    Dimension = 5,
    Consistency = 6,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Failure {
            exit,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Failure::new(Exit::Config, message)
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure::new(Exit::Usage, message)
    }

    pub fn consistency(message: impl Into<String>) -> Self {
        Failure::new(Exit::Consistency, message)
    }

    /// Prefixes the message, keeping the exit status.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match &e {
            Error::InvalidShape(_)
            | Error::InvalidParameter(_)
            | Error::EmptyMask
            | Error::RankDeficient { .. }
            | Error::Infeasible { .. }
            | Error::QuotaExhausted { .. }
            | Error::RepeatForbidden { .. } => Exit::Config,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format(_) => Exit::Io,
            Error::ShapeMismatch { .. } | Error::MissingReadout => Exit::Dimension,
            _ => Exit::Other,
        };
        Failure::new(exit, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(Exit::Io, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new(Exit::Io, e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;
