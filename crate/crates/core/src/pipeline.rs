//! The trained model bundle and the end-to-end assessment of one image.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{ClassifyError, Head, LogisticModel, QualityReport, StageTimings, ThresholdProfile};
use crate::features::{
    feature_schema_hash, raw_features, FeatureConfig, FeatureReducer, FeatureVector, RawFeatures, FEATURE_DIM,
};
use crate::imaging::{decode_for_assessment, sample_skin_patches, Image, ImagingError, PatchSampling, PatchSet};
use crate::scalar::Scalar;
use crate::segmentation::{
    segment_lesion, segment_skin, GmmModel, LesionOptions, SegmentationError, SegmentationMask, SkinThreshold,
};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PROFILE: &str = "balanced";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Border band width as a fraction of the shorter image side.
    pub border_margin: f64,
    pub sampling: PatchSampling,
    pub lesion: LesionOptions,
    pub features: FeatureConfig,
    /// Patch-sampling seed used when a caller does not supply one.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            border_margin: 0.05,
            sampling: PatchSampling::default(),
            lesion: LesionOptions::default(),
            features: FeatureConfig::default(),
            seed: 0,
        }
    }
}

/// Segmentation and raw features for one image. `raw` is `None` when no
/// patch with enough skin exists.
#[derive(Debug, Clone)]
pub struct Extraction<T> {
    pub skin: SegmentationMask<T>,
    pub lesion: Option<SegmentationMask<T>>,
    pub patches: Option<PatchSet>,
    pub raw: Option<RawFeatures<T>>,
}

/// Runs segmentation, patch sampling and the raw feature groups.
pub fn extract<T: Scalar>(
    gmm: &GmmModel<T>,
    threshold: &SkinThreshold<T>,
    config: &PipelineConfig,
    img: &Image,
    seed: u64,
    timings: &mut StageTimings,
) -> Result<Extraction<T>, ClassifyError> {
    let t = Instant::now();
    let skin = segment_skin(gmm, img, threshold, config.border_margin);
    timings.segmentation = ms_since(t);

    let t = Instant::now();
    let sampled = if skin.is_empty() {
        Err(ImagingError::NoSkinDetected)
    } else {
        sample_skin_patches(img, &skin, &config.sampling, seed)
    };
    timings.patches = ms_since(t);
    let patches = match sampled {
        Ok(p) => p,
        Err(ImagingError::NoSkinDetected) => {
            return Ok(Extraction { skin, lesion: None, patches: None, raw: None });
        }
        Err(e) => return Err(e.into()),
    };

    let t = Instant::now();
    let lesion = match segment_lesion(img, &skin, &config.lesion) {
        Ok(m) => m,
        Err(SegmentationError::NoSkinDetected) => {
            return Ok(Extraction { skin, lesion: None, patches: None, raw: None });
        }
        Err(e) => return Err(e.into()),
    };
    timings.lesion = ms_since(t);

    let t = Instant::now();
    let raw = raw_features(img, &skin, &lesion, &patches, &config.features);
    raw.check_shape()?;
    timings.features = ms_since(t);

    Ok(Extraction {
        skin,
        lesion: Some(lesion),
        patches: Some(patches),
        raw: Some(raw),
    })
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Everything needed to assess an image, serialized as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelBundle<T> {
    pub format_version: u32,
    pub feature_schema_hash: String,
    pub config: PipelineConfig,
    pub gmm: GmmModel<T>,
    pub skin_threshold: SkinThreshold<T>,
    pub reducer: FeatureReducer<T>,
    /// One head per label, in the order good, blurry, poor lighting, poor zoom/crop.
    pub heads: Vec<LogisticModel<T>>,
    pub profiles: Vec<ThresholdProfile>,
    pub default_profile: String,
}

/// Assessment plus the intermediate masks, for callers that render them.
#[derive(Debug, Clone)]
pub struct Assessment<T> {
    pub report: QualityReport,
    pub extraction: Extraction<T>,
    pub features: Option<FeatureVector<T>>,
}

/// SHA-256 hex digest of a serialized bundle; used as the model version.
pub fn bundle_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl<T: Scalar> ModelBundle<T> {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: String| Err(ClassifyError::ModelBundleInconsistent(m));
        if self.format_version != BUNDLE_FORMAT_VERSION {
            return bad(format!("unsupported bundle format version {}", self.format_version));
        }
        if self.feature_schema_hash != feature_schema_hash() {
            return bad("feature schema hash does not match this build".into());
        }
        if self.gmm.dim() != 6 {
            return bad(format!("skin model has dimension {}, expected 6", self.gmm.dim()));
        }
        if !self.skin_threshold.value.is_finite() {
            return bad("skin threshold is not finite".into());
        }
        self.reducer.validate().map_err(ClassifyError::ModelBundleInconsistent)?;
        if self.heads.len() != Head::ALL.len() {
            return bad(format!("{} classifier heads, expected 4", self.heads.len()));
        }
        for (head, model) in Head::ALL.iter().zip(&self.heads) {
            if model.label_name != *head {
                return bad(format!("head {} found where {head} was expected", model.label_name));
            }
            if model.weights.len() != FEATURE_DIM {
                return bad(format!("head {head} has {} weights", model.weights.len()));
            }
            if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
                return bad(format!("head {head} has non-finite parameters"));
            }
        }
        for p in &self.profiles {
            p.validate()?;
        }
        if self.profile(Some(&self.default_profile)).is_err() {
            return bad(format!("default profile {:?} is missing", self.default_profile));
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("bundle serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, ClassifyError> {
        let bundle: Self = serde_json::from_slice(bytes)
            .map_err(|e| ClassifyError::ModelBundleInconsistent(format!("cannot parse bundle: {e}")))?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn profile_names(&self) -> Vec<String> {
        self.profiles.iter().map(|p| p.name.clone()).collect()
    }

    /// The named profile, or the default when `name` is `None`.
    pub fn profile(&self, name: Option<&str>) -> Result<&ThresholdProfile, ClassifyError> {
        let wanted = name.unwrap_or(&self.default_profile);
        self.profiles
            .iter()
            .find(|p| p.name == wanted)
            .ok_or_else(|| ClassifyError::UnknownProfile {
                name: wanted.to_string(),
                available: self.profile_names(),
            })
    }

    /// Head probabilities for a reduced feature vector.
    pub fn predict(&self, features: &FeatureVector<T>) -> Result<[f64; 4], ClassifyError> {
        let mut out = [0.0; 4];
        for (o, head) in out.iter_mut().zip(&self.heads) {
            *o = head.predict_proba(features.values())?.to_f64_lossy();
        }
        Ok(out)
    }

    /// Head probabilities for an image; the no-skin outcome maps to
    /// `[0, 0, 0, 1]`.
    pub fn probabilities(&self, img: &Image, seed: u64) -> Result<[f64; 4], ClassifyError> {
        let mut timings = StageTimings::default();
        let ex = extract(&self.gmm, &self.skin_threshold, &self.config, img, seed, &mut timings)?;
        match &ex.raw {
            Some(raw) => self.predict(&self.reducer.reduce(raw)?),
            None => Ok([0.0, 0.0, 0.0, 1.0]),
        }
    }

    pub fn assess_detailed(
        &self,
        img: &Image,
        profile: &ThresholdProfile,
        seed: u64,
    ) -> Result<Assessment<T>, ClassifyError> {
        let start = Instant::now();
        let mut timings = StageTimings::default();
        let extraction = extract(&self.gmm, &self.skin_threshold, &self.config, img, seed, &mut timings)?;

        let t = Instant::now();
        let (mut report, features) = match &extraction.raw {
            Some(raw) => {
                let fv = self.reducer.reduce(raw)?;
                let probs = self.predict(&fv)?;
                (QualityReport::new(probs, profile, seed), Some(fv))
            }
            None => (QualityReport::no_skin(profile, seed), None),
        };
        timings.classify = ms_since(t);
        timings.total = ms_since(start);
        report.timings_ms = timings;
        Ok(Assessment { report, extraction, features })
    }

    pub fn assess(&self, img: &Image, profile: &ThresholdProfile, seed: u64) -> Result<QualityReport, ClassifyError> {
        self.assess_detailed(img, profile, seed).map(|a| a.report)
    }

    /// Decodes an encoded PNG/JPEG and assesses it; decode time is included
    /// in the report timings.
    pub fn assess_bytes(
        &self,
        bytes: &[u8],
        profile: &ThresholdProfile,
        seed: u64,
    ) -> Result<(Image, Assessment<T>), ClassifyError> {
        let t = Instant::now();
        let img = decode_for_assessment(bytes)?;
        let decode = ms_since(t);
        let mut a = self.assess_detailed(&img, profile, seed)?;
        a.report.timings_ms.decode = decode;
        a.report.timings_ms.total += decode;
        Ok((img, a))
    }
}

/// A bundle together with the hash of the bytes it was loaded from.
#[derive(Debug, Clone)]
pub struct LoadedBundle<T> {
    pub bundle: ModelBundle<T>,
    pub model_version: String,
}

impl<T: Scalar> LoadedBundle<T> {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifyError> {
        Ok(Self {
            bundle: ModelBundle::from_json_bytes(bytes)?,
            model_version: bundle_hash(bytes),
        })
    }
}
