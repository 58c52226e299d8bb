use std::fmt;
use std::path::Path;

use trueimage_core::classify::ClassifyError;
use trueimage_core::data::DataError;
use trueimage_core::training::TrainError;

/// Operational failure reported as `{"error": {"code", "message"}}` on
/// stderr with exit status 1.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("IO_ERROR", format!("{}: {e}", path.display()))
    }

    pub fn invalid_config(message: impl Into<String>) -> Self {
        Self::new("INVALID_CONFIG", message)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "code": self.code, "message": self.message } })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = match &e {
            DataError::ManifestNotFound(_) => "MANIFEST_NOT_FOUND",
            DataError::Io(_) => "IO_ERROR",
            DataError::Parse { .. } | DataError::Invalid(_) => "MANIFEST_INVALID",
            DataError::AlreadySplit(_) => "MANIFEST_ALREADY_SPLIT",
            DataError::Leakage { .. } => "SPLIT_LEAKAGE",
            DataError::ImageTooSmall(_) => "IMAGE_TOO_SMALL",
            DataError::Imaging(_) => "IMAGING_ERROR",
        };
        Self::new(code, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Classify(c) => c.into(),
            other => Self::new("TRAINING_FAILED", other.to_string()),
        }
    }
}
