//! Quality features: blur and lighting blocks computed over skin patches,
//! each reduced by PCA, plus two zoom ratios from the masks.

mod blur;
mod lighting;
mod pca;
mod zoom;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use blur::{blur_features, highpass_magnitude, laplacian_variance, HighpassFilter, HIGHPASS_CUTOFF, MAGNITUDE_FLOOR};
pub use lighting::{
    exposure_features, lighting_features, likelihood_features, OVER_EMPTY_SENTINEL, OVER_EXPOSED_ABOVE,
    UNDER_EMPTY_SENTINEL, UNDER_EXPOSED_BELOW,
};
pub use pca::{fit_pca, PcaModel};
pub use zoom::{zoom_features, ZoomFeatures, DEFAULT_GENEROUS_DELTA};

use crate::imaging::{to_color_space, ColorSpace, Image, PatchSet};
use crate::scalar::Scalar;
use crate::segmentation::SegmentationMask;

pub const BLUR_RAW_DIM: usize = 10;
pub const EXPOSURE_DIM: usize = 30;
pub const LIKELIHOOD_DIM: usize = 15;
pub const LIGHTING_RAW_DIM: usize = EXPOSURE_DIM + LIKELIHOOD_DIM;
pub const ZOOM_DIM: usize = 2;
pub const RAW_DIM: usize = BLUR_RAW_DIM + LIGHTING_RAW_DIM + ZOOM_DIM;
pub const REDUCED_DIM: usize = 5;
pub const FEATURE_DIM: usize = 2 * REDUCED_DIM + ZOOM_DIM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("features must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RawFeatures<T> {
    pub blur: Vec<T>,
    pub lighting: Vec<T>,
    pub zoom: ZoomFeatures,
}

impl<T: Scalar> RawFeatures<T> {
    pub fn check_shape(&self) -> Result<(), FeatureError> {
        if self.blur.len() != BLUR_RAW_DIM || self.lighting.len() != LIGHTING_RAW_DIM {
            return Err(FeatureError::DimensionMismatch(format!(
                "raw blur {} / lighting {}",
                self.blur.len(),
                self.lighting.len()
            )));
        }
        Ok(())
    }

    /// All 57 raw values in schema order.
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(RAW_DIM);
        v.extend_from_slice(&self.blur);
        v.extend_from_slice(&self.lighting);
        v.extend_from_slice(&self.zoom.to_array::<T>());
        v
    }
}

/// Knobs for the feature stage that are not learned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub center_box: f64,
    pub generous_delta: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            center_box: 0.5,
            generous_delta: DEFAULT_GENEROUS_DELTA,
        }
    }
}

pub fn raw_features<T: Scalar>(
    img: &Image,
    skin: &SegmentationMask<T>,
    lesion: &SegmentationMask<T>,
    patches: &PatchSet,
    config: &FeatureConfig,
) -> RawFeatures<T> {
    let gray: crate::imaging::PlanarImage<T> = to_color_space(img, ColorSpace::Gray);
    RawFeatures {
        blur: blur_features(patches, &gray).to_vec(),
        lighting: lighting_features(patches, &gray, &skin.scores),
        zoom: zoom_features(skin, lesion, config.center_box, config.generous_delta),
    }
}

/// The 12 values seen by the classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct FeatureVector<T>(pub Vec<T>);

impl<T: Scalar> FeatureVector<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }
}

/// Fitted per-group PCA models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureReducer<T> {
    pub blur: PcaModel<T>,
    pub lighting: PcaModel<T>,
}

impl<T: Scalar> FeatureReducer<T> {
    pub fn fit(raw: &[RawFeatures<T>]) -> Result<Self, FeatureError> {
        for r in raw {
            r.check_shape()?;
        }
        let blur: Vec<&[T]> = raw.iter().map(|r| r.blur.as_slice()).collect();
        let lighting: Vec<&[T]> = raw.iter().map(|r| r.lighting.as_slice()).collect();
        Ok(Self {
            blur: fit_pca(&blur, REDUCED_DIM)?,
            lighting: fit_pca(&lighting, REDUCED_DIM)?,
        })
    }

    pub fn reduce(&self, raw: &RawFeatures<T>) -> Result<FeatureVector<T>, FeatureError> {
        raw.check_shape()?;
        let mut v = self.blur.transform(&raw.blur)?;
        v.extend(self.lighting.transform(&raw.lighting)?);
        v.extend_from_slice(&raw.zoom.to_array::<T>());
        if v.len() != FEATURE_DIM {
            return Err(FeatureError::DimensionMismatch(format!("{} final features", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        Ok(FeatureVector(v))
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        self.blur.validate()?;
        self.lighting.validate()?;
        let dims = (self.blur.input_dim, self.blur.output_dim, self.lighting.input_dim, self.lighting.output_dim);
        if dims != (BLUR_RAW_DIM, REDUCED_DIM, LIGHTING_RAW_DIM, REDUCED_DIM) {
            return Err(format!("unexpected pca dimensions {dims:?}"));
        }
        Ok(())
    }
}

const STAT_NAMES: [&str; 5] = ["mean", "median", "max", "min", "std"];

/// Names of the raw features in vector order.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(RAW_DIM);
    let mut block = |quantities: &[&str]| {
        for q in quantities {
            for s in STAT_NAMES {
                names.push(format!("{q}_{s}"));
            }
        }
    };
    block(&["blur_highpass", "blur_laplacian_var"]);
    block(&[
        "under_median",
        "under_q1",
        "under_q3",
        "over_median",
        "over_q1",
        "over_q3",
    ]);
    block(&["skin_loglik_median", "skin_loglik_q1", "skin_loglik_q3"]);
    names.push("zoom_skin_ratio".into());
    names.push("zoom_lesion_ratio".into());
    names
}

pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Contents of `features.schema.json`.
pub fn feature_schema() -> serde_json::Value {
    serde_json::json!({
        "schema_version": FEATURE_SCHEMA_VERSION,
        "groups": {
            "blur": BLUR_RAW_DIM,
            "exposure": EXPOSURE_DIM,
            "likelihood": LIKELIHOOD_DIM,
            "zoom": ZOOM_DIM,
        },
        "reduced_per_group": REDUCED_DIM,
        "names": feature_names(),
    })
}

/// SHA-256 of the compact serialization of [`feature_schema`].
pub fn feature_schema_hash() -> String {
    let bytes = serde_json::to_vec(&feature_schema()).expect("schema serializes");
    hex::encode(Sha256::digest(&bytes))
}
