use std::fmt;

use nagd::NagdError;

/// Input problems (bad flags, unreadable/invalid files, malformed
/// expressions) exit 2; runtime failures (training aborts, invalid gold
/// samples) exit 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Input(String),
    Runtime(String),
}

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 1;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn input(e: impl fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<NagdError> for CliError {
    fn from(e: NagdError) -> Self {
        match e {
            NagdError::Config(_)
            | NagdError::Io(_)
            | NagdError::Checkpoint(_)
            | NagdError::BadDims { .. }
            | NagdError::OddDimension(_) => CliError::input(e),
            other => CliError::runtime(other),
        }
    }
}
