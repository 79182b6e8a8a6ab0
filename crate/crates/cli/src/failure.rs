//! Errors that end a run, tagged with the process exit code.

use std::fmt;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    /// Bad flags, config values or missing input files.
    pub fn config(msg: impl fmt::Display) -> Failure {
        Failure { code: EXIT_CONFIG, error: anyhow::anyhow!("{msg}") }
    }

    /// Unreadable or unusable input data, or unwritable outputs.
    pub fn data(error: impl Into<anyhow::Error>) -> Failure {
        Failure { code: EXIT_DATA, error: error.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}
