//! Skin and lesion segmentation.
//!
//! Every pixel is scored independently by the skin mixture model; a cutoff on
//! the score plus a border band that is always background gives the skin
//! mask. Lesions are found with a LAB top-quantile heuristic restricted to
//! that mask.

mod gmm;
mod lesion;
pub mod pixels;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{skin_vector_rgb, Image};
use crate::scalar::Scalar;

pub use gmm::{fit_gmm, GmmFit, GmmFitOptions, GmmModel, GMM_FORMAT_VERSION, MAX_DIM, SKIN_NORMALIZATION};
pub use lesion::{center_box_bounds, lesion_channel_fractions, segment_lesion, LesionOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training points must be finite")]
    NonFinite,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("no skin detected")]
    NoSkinDetected,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskKind {
    Skin,
    Lesion,
}

/// Per-pixel labels together with the score map they were cut from.
///
/// For skin masks `scores` are mixture log-likelihoods; for lesion masks they
/// are the values of the selected LAB channel. `labels[p]` is
/// `scores[p] >= threshold` outside the border band (intersected with the
/// skin mask for lesions).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask<T> {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<bool>,
    pub scores: Vec<T>,
    pub kind: MaskKind,
    pub threshold: T,
    /// Width in pixels of the band along each edge that is never skin.
    pub border: usize,
    /// LAB channel (0 = L, 1 = a, 2 = b) a lesion mask was cut from.
    pub lesion_channel: Option<usize>,
}

impl<T: Scalar> SegmentationMask<T> {
    /// Mask with synthetic scores (1 for set labels, 0 otherwise) and no border.
    pub fn from_labels(labels: Vec<bool>, width: usize, height: usize, kind: MaskKind) -> Self {
        assert_eq!(labels.len(), width * height);
        let scores = labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
        Self {
            width,
            height,
            labels,
            scores,
            kind,
            threshold: T::lit(0.5),
            border: 0,
            lesion_channel: None,
        }
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.labels.iter().any(|&l| l)
    }

    #[inline]
    pub fn in_border(&self, row: usize, col: usize) -> bool {
        let b = self.border;
        row < b || col < b || row + b >= self.height || col + b >= self.width
    }

    /// Same score map cut at a different threshold.
    pub fn relabel(&self, threshold: T) -> Self {
        let labels = self
            .scores
            .iter()
            .enumerate()
            .map(|(i, &s)| s >= threshold && !self.in_border(i / self.width, i % self.width))
            .collect();
        Self {
            labels,
            threshold,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    FixedRecall,
    Manual,
}

/// Log-likelihood cutoff separating skin from background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkinThreshold<T> {
    pub value: T,
    pub calibration: Calibration,
    pub recall_target: f64,
}

impl<T: Scalar> SkinThreshold<T> {
    pub fn manual(value: T) -> Self {
        Self {
            value,
            calibration: Calibration::Manual,
            recall_target: 1.0,
        }
    }

    /// Largest cutoff whose recall on `held_out` skin pixels is at least
    /// `recall_target`.
    pub fn calibrate<V: AsRef<[T]>>(
        model: &GmmModel<T>,
        held_out: &[V],
        recall_target: f64,
    ) -> Result<Self, SegmentationError> {
        if held_out.is_empty() {
            return Err(SegmentationError::InsufficientData("no held-out skin pixels".into()));
        }
        if !(recall_target > 0.0 && recall_target <= 1.0) {
            return Err(SegmentationError::InsufficientData(format!(
                "recall target {recall_target} outside (0, 1]"
            )));
        }
        let scores: Vec<T> = held_out.iter().map(|p| model.log_density(p.as_ref())).collect();
        Ok(Self {
            value: recall_cutoff(scores, recall_target),
            calibration: Calibration::FixedRecall,
            recall_target,
        })
    }
}

pub(crate) fn recall_cutoff<T: Scalar>(mut scores: Vec<T>, recall_target: f64) -> T {
    scores.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let needed = ((recall_target * scores.len() as f64).ceil() as usize).clamp(1, scores.len());
    scores[needed - 1]
}

/// Scores every pixel of `img` under `model` (the 6-vector pixel encoding).
pub fn score_pixels<T: Scalar>(model: &GmmModel<T>, img: &Image) -> Vec<T> {
    img.pixels()
        .map(|px| {
            let v = skin_vector_rgb(px).map(T::lit);
            model.log_density(&v)
        })
        .collect()
}

/// Border band width for a margin given as a fraction of the shorter side.
pub fn border_width(width: usize, height: usize, border_margin: f64) -> usize {
    (border_margin.max(0.0) * width.min(height) as f64).floor() as usize
}

pub fn segment_skin<T: Scalar>(
    model: &GmmModel<T>,
    img: &Image,
    threshold: &SkinThreshold<T>,
    border_margin: f64,
) -> SegmentationMask<T> {
    let scores = score_pixels(model, img);
    mask_from_scores(scores, img.width(), img.height(), threshold.value, border_margin)
}

pub(crate) fn mask_from_scores<T: Scalar>(
    scores: Vec<T>,
    width: usize,
    height: usize,
    threshold: T,
    border_margin: f64,
) -> SegmentationMask<T> {
    let mut mask = SegmentationMask {
        width,
        height,
        labels: Vec::new(),
        scores,
        kind: MaskKind::Skin,
        threshold,
        border: border_width(width, height, border_margin),
        lesion_channel: None,
    };
    mask.labels = mask
        .scores
        .iter()
        .enumerate()
        .map(|(i, &s)| s >= threshold && !mask.in_border(i / width, i % width))
        .collect();
    mask
}
