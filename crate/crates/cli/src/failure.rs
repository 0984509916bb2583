use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use overlay_core::datamodel::DataError;
use overlay_core::moe::MoeError;
use overlay_core::training::TrainError;

/// A command failure carrying its exit status: 1 for invalid input or a
/// failed check, 2 for I/O and usage problems.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self { code: 2, message: format!("{}: {err}", path.display()) }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => Self::usage(e.to_string()),
            _ => Self::invalid(e.to_string()),
        }
    }
}

impl From<MoeError> for Failure {
    fn from(e: MoeError) -> Self {
        match e {
            MoeError::Io(_) => Self::usage(e.to_string()),
            MoeError::Config(_) => Self::usage(e.to_string()),
            _ => Self::invalid(e.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Config(_) => Self::usage(e.to_string()),
            _ => Self::invalid(e.to_string()),
        }
    }
}

pub type Outcome = Result<(), Failure>;
