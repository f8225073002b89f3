use std::fmt;

use sta_core::StaError;

/// Process exit codes. These are part of the interface and do not change.
pub mod exit {
    pub const OK: i32 = 0;
    /// Anything not covered below.
    pub const INTERNAL: i32 = 1;
    /// Bad flags, config or schedule.
    pub const CONFIG: i32 = 2;
    /// File missing, unreadable, unwritable or malformed.
    pub const IO: i32 = 3;
    /// Training hit a non-finite loss or gradient.
    pub const NON_FINITE: i32 = 4;
    /// Checkpoint, data and image shapes disagree.
    pub const INCOMPATIBLE: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: exit::CONFIG,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: exit::IO,
            message: message.into(),
        }
    }

    pub fn incompatible(message: impl Into<String>) -> Self {
        CliError {
            code: exit::INCOMPATIBLE,
            message: message.into(),
        }
    }

    /// Prefixes the message, e.g. with the file being read.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<StaError> for CliError {
    fn from(e: StaError) -> Self {
        let code = match &e {
            StaError::Config(_) | StaError::OutOfRange(_) | StaError::Json(_) | StaError::Domain { .. } => exit::CONFIG,
            StaError::Io(_) | StaError::Format(_) | StaError::UnsupportedContainer(_) => exit::IO,
            StaError::NonFinite { .. } => exit::NON_FINITE,
            StaError::Incompatible(_) | StaError::ShapeMismatch { .. } | StaError::InvalidShape { .. } => {
                exit::INCOMPATIBLE
            }
            _ => exit::INTERNAL,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
