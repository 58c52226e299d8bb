//! Fitting a complete model bundle from labeled images, and evaluating a
//! bundle on a labeled split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{fit_logistic, ClassifyError, Head, LogisticFitOptions, StageTimings, ThresholdProfile};
use crate::data::Labels;
use crate::eval::{
    bootstrap_band, roc_curve, select_operating_point, youden_point, Constraint, EvalError, OperatingPoint, RocBand, RocCurve,
};
use crate::features::{feature_schema_hash, FeatureReducer, RawFeatures};
use crate::imaging::{skin_vector_rgb, Image};
use crate::pipeline::{extract, ModelBundle, PipelineConfig, BUNDLE_FORMAT_VERSION, DEFAULT_PROFILE};
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::segmentation::{fit_gmm, GmmFitOptions, SkinThreshold};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub pipeline: PipelineConfig,
    pub gmm: GmmFitOptions,
    /// Skin recall the threshold is calibrated to on held-out pixels.
    pub recall_target: f64,
    /// Share of skin pixels held out for threshold calibration.
    pub holdout_fraction: f64,
    pub logistic: LogisticFitOptions,
    /// Good-image retention the lenient profile must keep on validation.
    pub lenient_min_tpr: f64,
    /// Good-image retention the strict profile keeps on validation while
    /// rejecting as many poor images as possible.
    pub strict_min_tpr: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            gmm: GmmFitOptions::default(),
            recall_target: 0.95,
            holdout_fraction: 0.2,
            logistic: LogisticFitOptions::default(),
            lenient_min_tpr: 0.95,
            strict_min_tpr: 0.8,
        }
    }
}

/// An image with its ground-truth labels.
#[derive(Debug, Clone, Copy)]
pub struct LabeledImage<'a> {
    pub image: &'a Image,
    pub labels: Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTraining {
    pub head: Head,
    pub loss: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub train_auc: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub gmm_iterations: usize,
    pub gmm_converged: bool,
    pub gmm_log_likelihood: f64,
    pub skin_pixels_fit: usize,
    pub skin_pixels_held_out: usize,
    pub skin_threshold: f64,
    pub train_images: usize,
    pub val_images: usize,
    /// Training images dropped because no skin patch could be sampled.
    pub train_without_skin: usize,
    pub heads: Vec<HeadTraining>,
    pub profiles: Vec<ThresholdProfile>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("skin model: {0}")]
    Segmentation(#[from] crate::segmentation::SegmentationError),
    #[error("features: {0}")]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("validation split: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid training input: {0}")]
    Invalid(String),
}

/// Deterministic holdout: every pixel goes to the holdout with probability
/// `fraction`, decided by a hash of its index and the seed.
fn split_pixels<T: Scalar>(pixels: &[[u8; 3]], fraction: f64, seed: u64) -> (Vec<[T; 6]>, Vec<[T; 6]>) {
    let mut fit = Vec::with_capacity(pixels.len());
    let mut held = Vec::new();
    for (i, &px) in pixels.iter().enumerate() {
        let v = skin_vector_rgb(px).map(T::lit);
        let u = (derive_seed(seed, 0x484f_4c44, i as u64) >> 11) as f64 / (1u64 << 53) as f64;
        if u < fraction {
            held.push(v);
        } else {
            fit.push(v);
        }
    }
    (fit, held)
}

/// Fits the skin model, threshold, feature reducer and the four heads, and
/// picks the threshold profiles on the validation images.
pub fn train_bundle<T: Scalar>(
    skin_pixels: &[[u8; 3]],
    train: &[LabeledImage<'_>],
    val: &[LabeledImage<'_>],
    options: &TrainOptions,
) -> Result<(ModelBundle<T>, TrainReport), TrainError> {
    if !(options.holdout_fraction > 0.0 && options.holdout_fraction < 1.0) {
        return Err(TrainError::Invalid(format!(
            "holdout fraction {} outside (0, 1)",
            options.holdout_fraction
        )));
    }
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Invalid("train and val splits must be nonempty".into()));
    }

    let (fit_px, held_px) = split_pixels::<T>(skin_pixels, options.holdout_fraction, options.gmm.seed);
    if held_px.is_empty() {
        return Err(TrainError::Invalid("no skin pixels left for threshold calibration".into()));
    }
    let gmm_fit = fit_gmm(&fit_px, &options.gmm, &format!("{} skin pixels", fit_px.len()))?;
    let gmm = gmm_fit.model;
    let skin_threshold = SkinThreshold::calibrate(&gmm, &held_px, options.recall_target)?;
    let config = options.pipeline;

    let raws: Vec<Option<RawFeatures<T>>> = train
        .par_iter()
        .map(|li| {
            let mut t = StageTimings::default();
            extract(&gmm, &skin_threshold, &config, li.image, config.seed, &mut t).map(|e| e.raw)
        })
        .collect::<Result<_, _>>()?;
    let kept: Vec<(RawFeatures<T>, Labels)> = raws
        .into_iter()
        .zip(train)
        .filter_map(|(r, li)| r.map(|r| (r, li.labels)))
        .collect();
    let train_without_skin = train.len() - kept.len();
    let raw_rows: Vec<RawFeatures<T>> = kept.iter().map(|(r, _)| r.clone()).collect();
    let reducer = FeatureReducer::fit(&raw_rows)?;
    let x: Vec<Vec<T>> = raw_rows
        .iter()
        .map(|r| reducer.reduce(r).map(|f| f.0))
        .collect::<Result<_, _>>()?;

    let mut heads = Vec::with_capacity(4);
    let mut fits = Vec::with_capacity(4);
    for head in Head::ALL {
        let y: Vec<bool> = kept.iter().map(|(_, l)| l.as_array()[head.index()]).collect();
        let fit = fit_logistic(&x, &y, head, &options.logistic)?;
        heads.push(fit.model.clone());
        fits.push(fit);
    }

    let mut bundle = ModelBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        feature_schema_hash: feature_schema_hash(),
        config,
        gmm,
        skin_threshold,
        reducer,
        heads,
        profiles: Vec::new(),
        default_profile: DEFAULT_PROFILE.to_string(),
    };

    let train_scores = score_images(&bundle, train)?;
    let val_scores = score_images(&bundle, val)?;
    let mut balanced = [0.5; 4];
    let mut head_reports = Vec::with_capacity(4);
    let mut val_good_curve = None;
    for (head, fit) in Head::ALL.into_iter().zip(&fits) {
        let h = head.index();
        let (vs, vl) = column(&val_scores, val, h);
        let val_curve = roc_curve(&vs, &vl)?;
        balanced[h] = midpoint_cutoff(&val_curve, &youden_point(&val_curve));
        let (ts, tl) = column(&train_scores, train, h);
        head_reports.push(HeadTraining {
            head,
            loss: fit.loss.to_f64_lossy(),
            gradient_norm: fit.gradient_norm.to_f64_lossy(),
            iterations: fit.iterations,
            converged: fit.converged,
            train_auc: roc_curve(&ts, &tl).ok().map(|c| c.auc),
            val_auc: Some(val_curve.auc),
        });
        if head == Head::Good {
            val_good_curve = Some(val_curve);
        }
    }
    let good_curve = val_good_curve.expect("good head evaluated");
    let lenient_point = lenient_point(&good_curve, options.lenient_min_tpr)?;
    let strict_point = select_operating_point(&good_curve, Constraint::MinTpr(options.strict_min_tpr))?;
    let with_good = |good: f64| {
        let mut c = balanced;
        c[Head::Good.index()] = good;
        c
    };
    bundle.profiles = vec![
        ThresholdProfile::from_cutoffs("balanced", balanced)?,
        ThresholdProfile::from_cutoffs("lenient", with_good(midpoint_cutoff(&good_curve, &lenient_point)))?,
        ThresholdProfile::from_cutoffs("strict", with_good(midpoint_cutoff(&good_curve, &strict_point)))?,
    ];
    bundle.validate()?;

    let report = TrainReport {
        gmm_iterations: gmm_fit.iterations,
        gmm_converged: gmm_fit.converged,
        gmm_log_likelihood: gmm_fit.log_likelihood_trace.last().map_or(f64::NAN, |v| v.to_f64_lossy()),
        skin_pixels_fit: fit_px.len(),
        skin_pixels_held_out: held_px.len(),
        skin_threshold: bundle.skin_threshold.value.to_f64_lossy(),
        train_images: train.len(),
        val_images: val.len(),
        train_without_skin,
        heads: head_reports,
        profiles: bundle.profiles.clone(),
    };
    Ok((bundle, report))
}

/// Lowest-FPR point with `tpr >= min_tpr`; among those, the one keeping the
/// most positives (lowest threshold).
pub fn lenient_point(curve: &RocCurve, min_tpr: f64) -> Result<OperatingPoint, EvalError> {
    let first = select_operating_point(curve, Constraint::MinTpr(min_tpr))?;
    let p = curve
        .points
        .iter()
        .filter(|p| p.tpr >= min_tpr && p.fpr == first.fpr)
        .last()
        .expect("selected point satisfies its own filter");
    Ok(OperatingPoint {
        threshold: p.threshold,
        tpr: p.tpr,
        fpr: p.fpr,
        description: format!("{}, most retentive", first.description),
    })
}

/// Cutoff halfway between the chosen curve threshold and the next lower
/// distinct score, so that it classifies the validation set identically
/// while leaving a margin on both sides.
pub fn midpoint_cutoff(curve: &RocCurve, point: &OperatingPoint) -> f64 {
    let Some(t) = point.threshold else {
        return 1.0;
    };
    let next = curve
        .points
        .iter()
        .filter_map(|p| p.threshold)
        .filter(|&s| s < t)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));
    match next {
        Some(lower) => (0.5 * (t + lower)).clamp(0.0, 1.0),
        None => t.clamp(0.0, 1.0),
    }
}

/// Head probabilities for every image, in input order.
pub fn score_images<T: Scalar>(bundle: &ModelBundle<T>, images: &[LabeledImage<'_>]) -> Result<Vec<[f64; 4]>, ClassifyError> {
    images
        .par_iter()
        .map(|li| bundle.probabilities(li.image, bundle.config.seed))
        .collect()
}

fn column(scores: &[[f64; 4]], images: &[LabeledImage<'_>], h: usize) -> (Vec<f64>, Vec<bool>) {
    let s = scores.iter().map(|p| p[h]).collect();
    let l = images.iter().map(|li| li.labels.as_array()[h]).collect();
    (s, l)
}

/// Rates a fixed cutoff achieves on one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub profile: String,
    pub cutoff: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadEvaluation {
    pub head: Head,
    pub positives: usize,
    pub negatives: usize,
    /// Absent when the split has a single class for this head.
    pub auc: Option<f64>,
    pub roc: Option<RocCurve>,
    pub band: Option<RocBand>,
    pub profile_points: Vec<ProfilePoint>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub images: usize,
    pub n_resamples: usize,
    pub seed: u64,
    /// Resampling unit of the bands.
    pub band_method: String,
    pub heads: Vec<HeadEvaluation>,
}

impl EvaluationReport {
    pub fn head(&self, head: Head) -> &HeadEvaluation {
        &self.heads[head.index()]
    }
}

/// Per-head ROC, bootstrap band and the rates of every bundle profile.
pub fn evaluate_scores(
    scores: &[[f64; 4]],
    labels: &[Labels],
    profiles: &[ThresholdProfile],
    n_resamples: usize,
    seed: u64,
) -> EvaluationReport {
    let heads = Head::ALL
        .into_iter()
        .map(|head| {
            let h = head.index();
            let s: Vec<f64> = scores.iter().map(|p| p[h]).collect();
            let l: Vec<bool> = labels.iter().map(|l| l.as_array()[h]).collect();
            let positives = l.iter().filter(|&&v| v).count();
            let negatives = l.len() - positives;
            let profile_points = profiles
                .iter()
                .map(|p| {
                    let cutoff = p.cutoff(head);
                    let rate = |want: bool| {
                        let n = l.iter().filter(|&&v| v == want).count();
                        let hit = s.iter().zip(&l).filter(|(&x, &v)| v == want && x >= cutoff).count();
                        if n == 0 {
                            0.0
                        } else {
                            hit as f64 / n as f64
                        }
                    };
                    ProfilePoint {
                        profile: p.name.clone(),
                        cutoff,
                        tpr: rate(true),
                        fpr: rate(false),
                    }
                })
                .collect();
            let analysed = roc_curve(&s, &l).and_then(|roc| {
                let band = bootstrap_band(&s, &l, n_resamples, derive_seed(seed, 0x524f_43, h as u64))?;
                Ok((roc, band))
            });
            match analysed {
                Ok((roc, band)) => HeadEvaluation {
                    head,
                    positives,
                    negatives,
                    auc: Some(roc.auc),
                    roc: Some(roc),
                    band: Some(band),
                    profile_points,
                    error: None,
                },
                Err(e) => HeadEvaluation {
                    head,
                    positives,
                    negatives,
                    auc: None,
                    roc: None,
                    band: None,
                    profile_points,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    EvaluationReport {
        images: scores.len(),
        n_resamples,
        seed,
        band_method: "stratified bootstrap over images, vertical averaging".into(),
        heads,
    }
}

pub fn evaluate_bundle<T: Scalar>(
    bundle: &ModelBundle<T>,
    images: &[LabeledImage<'_>],
    n_resamples: usize,
    seed: u64,
) -> Result<EvaluationReport, ClassifyError> {
    let scores = score_images(bundle, images)?;
    let labels: Vec<Labels> = images.iter().map(|li| li.labels).collect();
    Ok(evaluate_scores(&scores, &labels, &bundle.profiles, n_resamples, seed))
}
