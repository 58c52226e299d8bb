//! Four independent logistic heads over the 12-value feature vector, the
//! per-clinic cutoff profiles, and the report handed back to callers.

mod logistic;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use logistic::{fit_logistic, sigmoid, LogisticFit, LogisticFitOptions, LogisticModel, LogisticObjective};
pub use report::{
    guidance_for, DefectProbs, QualityReport, StageTimings, ThresholdProfile, Verdicts, GUIDANCE_BLURRY,
    GUIDANCE_LIGHTING, GUIDANCE_NO_SKIN, GUIDANCE_RETAKE, GUIDANCE_ZOOM,
};

use crate::features::FeatureError;
use crate::imaging::ImagingError;
use crate::segmentation::SegmentationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Good,
    Blurry,
    PoorLighting,
    PoorZoomCrop,
}

impl Head {
    pub const ALL: [Head; 4] = [Head::Good, Head::Blurry, Head::PoorLighting, Head::PoorZoomCrop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Head::Good => "good",
            Head::Blurry => "blurry",
            Head::PoorLighting => "poor_lighting",
            Head::PoorZoomCrop => "poor_zoom_crop",
        }
    }
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("labels contain a single class and l2 is zero")]
    SingleClassData,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("features must be finite")]
    NonFinite,
    #[error("model bundle inconsistent: {0}")]
    ModelBundleInconsistent(String),
    #[error("unknown profile {name:?}; available: {available:?}")]
    UnknownProfile { name: String, available: Vec<String> },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

impl ClassifyError {
    /// Stable machine-readable code for error payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Imaging(ImagingError::MalformedImage(_)) => "MALFORMED_IMAGE",
            Self::Imaging(ImagingError::UnsupportedFormat(_)) => "UNSUPPORTED_FORMAT",
            Self::Imaging(_) => "IMAGING_ERROR",
            Self::ModelBundleInconsistent(_) => "MODEL_BUNDLE_INCONSISTENT",
            Self::UnknownProfile { .. } => "UNKNOWN_PROFILE",
            Self::SingleClassData => "SINGLE_CLASS_DATA",
            Self::InsufficientData(_) => "INSUFFICIENT_DATA",
            Self::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Self::InvalidParameter(_) => "INVALID_PARAMETER",
            Self::NonFinite | Self::Feature(_) => "FEATURE_ERROR",
            Self::Segmentation(_) => "SEGMENTATION_ERROR",
        }
    }

    /// True for faults in the submitted image rather than in the service.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Self::Imaging(ImagingError::MalformedImage(_) | ImagingError::UnsupportedFormat(_)))
    }
}
