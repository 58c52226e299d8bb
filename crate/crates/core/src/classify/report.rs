use serde::{Deserialize, Serialize};

use super::{ClassifyError, Head};

pub const GUIDANCE_BLURRY: &str = "hold the camera steady / tap to focus";
pub const GUIDANCE_LIGHTING: &str = "adjust lighting: avoid glare and dim rooms";
pub const GUIDANCE_ZOOM: &str = "move closer and center the lesion";
pub const GUIDANCE_NO_SKIN: &str = "no skin detected — move closer and center the lesion";
pub const GUIDANCE_RETAKE: &str = "image quality is below the clinic's threshold; please retake the photo";

/// Per-head probability cutoffs; a verdict is set when `p >= cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub name: String,
    pub good: f64,
    pub blurry: f64,
    pub poor_lighting: f64,
    pub poor_zoom_crop: f64,
}

impl ThresholdProfile {
    pub fn from_cutoffs(name: impl Into<String>, cutoffs: [f64; 4]) -> Result<Self, ClassifyError> {
        if let Some(c) = cutoffs.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(ClassifyError::InvalidParameter(format!("cutoff {c} outside [0, 1]")));
        }
        Ok(Self {
            name: name.into(),
            good: cutoffs[0],
            blurry: cutoffs[1],
            poor_lighting: cutoffs[2],
            poor_zoom_crop: cutoffs[3],
        })
    }

    pub fn cutoffs(&self) -> [f64; 4] {
        [self.good, self.blurry, self.poor_lighting, self.poor_zoom_crop]
    }

    pub fn cutoff(&self, head: Head) -> f64 {
        self.cutoffs()[head.index()]
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        Self::from_cutoffs(self.name.clone(), self.cutoffs()).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectProbs {
    pub blurry: f64,
    pub poor_lighting: f64,
    pub poor_zoom_crop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub good: bool,
    pub blurry: bool,
    pub poor_lighting: bool,
    pub poor_zoom_crop: bool,
}

impl Verdicts {
    /// `probs` in head order: good, blurry, poor lighting, poor zoom/crop.
    pub fn from_probs(probs: [f64; 4], profile: &ThresholdProfile) -> Self {
        let c = profile.cutoffs();
        Self {
            good: probs[0] >= c[0],
            blurry: probs[1] >= c[1],
            poor_lighting: probs[2] >= c[2],
            poor_zoom_crop: probs[3] >= c[3],
        }
    }

    pub fn get(&self, head: Head) -> bool {
        match head {
            Head::Good => self.good,
            Head::Blurry => self.blurry,
            Head::PoorLighting => self.poor_lighting,
            Head::PoorZoomCrop => self.poor_zoom_crop,
        }
    }

    pub fn any_defect(&self) -> bool {
        self.blurry || self.poor_lighting || self.poor_zoom_crop
    }
}

pub fn guidance_for(verdicts: &Verdicts) -> Vec<String> {
    let mut out = Vec::new();
    if verdicts.blurry {
        out.push(GUIDANCE_BLURRY.to_string());
    }
    if verdicts.poor_lighting {
        out.push(GUIDANCE_LIGHTING.to_string());
    }
    if verdicts.poor_zoom_crop {
        out.push(GUIDANCE_ZOOM.to_string());
    }
    if out.is_empty() && !verdicts.good {
        out.push(GUIDANCE_RETAKE.to_string());
    }
    out
}

/// Wall-clock milliseconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub decode: f64,
    pub segmentation: f64,
    pub patches: f64,
    pub lesion: f64,
    pub features: f64,
    pub classify: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.decode + self.segmentation + self.patches + self.lesion + self.features + self.classify
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Probability that the photo is clinically usable.
    pub quality_score: f64,
    pub defect_probs: DefectProbs,
    #[serde(flatten)]
    pub verdicts: Verdicts,
    pub guidance: Vec<String>,
    pub profile: String,
    pub no_skin_detected: bool,
    pub seed: u64,
    pub timings_ms: StageTimings,
}

impl QualityReport {
    pub fn new(probs: [f64; 4], profile: &ThresholdProfile, seed: u64) -> Self {
        let verdicts = Verdicts::from_probs(probs, profile);
        Self {
            quality_score: probs[0],
            defect_probs: DefectProbs {
                blurry: probs[1],
                poor_lighting: probs[2],
                poor_zoom_crop: probs[3],
            },
            guidance: guidance_for(&verdicts),
            verdicts,
            profile: profile.name.clone(),
            no_skin_detected: false,
            seed,
            timings_ms: StageTimings::default(),
        }
    }

    /// Report for an image with no usable skin region.
    pub fn no_skin(profile: &ThresholdProfile, seed: u64) -> Self {
        Self {
            quality_score: 0.0,
            defect_probs: DefectProbs {
                blurry: 0.0,
                poor_lighting: 0.0,
                poor_zoom_crop: 1.0,
            },
            verdicts: Verdicts {
                good: false,
                blurry: false,
                poor_lighting: false,
                poor_zoom_crop: true,
            },
            guidance: vec![GUIDANCE_NO_SKIN.to_string()],
            profile: profile.name.clone(),
            no_skin_detected: true,
            seed,
            timings_ms: StageTimings::default(),
        }
    }

    pub fn probs(&self) -> [f64; 4] {
        [
            self.quality_score,
            self.defect_probs.blurry,
            self.defect_probs.poor_lighting,
            self.defect_probs.poor_zoom_crop,
        ]
    }

    /// Copy with timings zeroed, for comparing assessments across runs.
    pub fn without_timings(&self) -> Self {
        Self {
            timings_ms: StageTimings::default(),
            ..self.clone()
        }
    }
}
