use std::fmt;

use gazeintent_core::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INVALID_CONFIG: i32 = 2;
    pub const MISALIGNED: i32 = 3;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(exit::INVALID_CONFIG, message)
    }

    pub fn with_context(self, context: impl fmt::Display) -> Self {
        Self { code: self.code, message: format!("{context}: {}", self.message) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) => exit::INVALID_CONFIG,
            Error::LengthMismatch(_) | Error::NonMonotonicTimestamp { .. } => exit::MISALIGNED,
            _ => exit::FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(exit::FAILURE, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
