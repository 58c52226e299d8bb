//! ROC analysis for the classifier heads: curves, AUC, operating points and
//! stratified bootstrap bands.
//!
//! Scores are probabilities, so everything here works in `f64`. An image is
//! called positive at threshold `t` when `score >= t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("no point on the curve satisfies {0}")]
    Unsatisfiable(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score cutoff; `None` stands for `+inf` (nothing called positive).
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Sorted by threshold descending, starting at (0, 0) and ending at (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::InvalidInput(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::InvalidInput("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClassLabels);
    }
    Ok((pos, neg))
}

/// Threshold sweep over the distinct scores; tied scores move together.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve, EvalError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: None }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: Some(s),
        });
    }
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc, positives: pos, negatives: neg })
}

fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}

impl RocCurve {
    /// TPR at a given FPR, linearly interpolated between curve points; on a
    /// vertical segment the highest TPR is used.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.fpr <= fpr);
        if idx == 0 {
            return 0.0;
        }
        let a = self.points[idx - 1];
        if a.fpr == fpr || idx == self.points.len() {
            return a.tpr;
        }
        let b = self.points[idx];
        a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Constraint {
    /// Keep at least this true-positive rate; minimize false positives.
    MinTpr(f64),
    /// Allow at most this false-positive rate; maximize true positives.
    MaxFpr(f64),
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Constraint::MinTpr(v) => write!(f, "tpr >= {v}"),
            Constraint::MaxFpr(v) => write!(f, "fpr <= {v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: Option<f64>,
    pub tpr: f64,
    pub fpr: f64,
    pub description: String,
}

impl OperatingPoint {
    /// Threshold usable as a probability cutoff; `+inf` maps to 1.
    pub fn cutoff(&self) -> f64 {
        self.threshold.unwrap_or(1.0).clamp(0.0, 1.0)
    }
}

/// Best curve point under `constraint`. Ties go to the higher threshold,
/// which comes first on the curve.
pub fn select_operating_point(curve: &RocCurve, constraint: Constraint) -> Result<OperatingPoint, EvalError> {
    let mut best: Option<&RocPoint> = None;
    for p in &curve.points {
        let (ok, better) = match constraint {
            Constraint::MinTpr(v) => (p.tpr >= v, best.is_none_or(|b| p.fpr < b.fpr)),
            Constraint::MaxFpr(v) => (p.fpr <= v, best.is_none_or(|b| p.tpr > b.tpr)),
        };
        if ok && better {
            best = Some(p);
        }
    }
    let p = best.ok_or_else(|| EvalError::Unsatisfiable(constraint.to_string()))?;
    Ok(OperatingPoint {
        threshold: p.threshold,
        tpr: p.tpr,
        fpr: p.fpr,
        description: constraint.to_string(),
    })
}

/// Cutoff maximizing Youden's J = TPR - FPR; ties go to the higher threshold.
pub fn youden_point(curve: &RocCurve) -> OperatingPoint {
    let mut best = &curve.points[0];
    for p in &curve.points {
        if p.tpr - p.fpr > best.tpr - best.fpr {
            best = p;
        }
    }
    OperatingPoint {
        threshold: best.threshold,
        tpr: best.tpr,
        fpr: best.fpr,
        description: "max youden j".into(),
    }
}

pub const BAND_GRID_POINTS: usize = 101;
pub const MIN_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocBand {
    pub fpr_grid: Vec<f64>,
    /// TPR of the full-sample curve on the grid.
    pub tpr: Vec<f64>,
    pub tpr_mean: Vec<f64>,
    pub tpr_std: Vec<f64>,
    /// `tpr - tpr_std` and `tpr + tpr_std`, clipped to [0, 1].
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

/// One-standard-deviation band from a stratified bootstrap over images,
/// averaged vertically on a fixed FPR grid.
pub fn bootstrap_band(scores: &[f64], labels: &[bool], n_resamples: usize, seed: u64) -> Result<RocBand, EvalError> {
    check_inputs(scores, labels)?;
    if n_resamples < MIN_RESAMPLES {
        return Err(EvalError::InvalidInput(format!(
            "{n_resamples} resamples, need at least {MIN_RESAMPLES}"
        )));
    }
    let full = roc_curve(scores, labels)?;
    let grid: Vec<f64> = (0..BAND_GRID_POINTS).map(|i| i as f64 / (BAND_GRID_POINTS - 1) as f64).collect();
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();

    let resamples: Vec<(Vec<f64>, f64)> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, i));
            let mut s = Vec::with_capacity(scores.len());
            let mut l = Vec::with_capacity(scores.len());
            for _ in 0..pos.len() {
                s.push(pos[rng.random_range(0..pos.len())]);
                l.push(true);
            }
            for _ in 0..neg.len() {
                s.push(neg[rng.random_range(0..neg.len())]);
                l.push(false);
            }
            let curve = roc_curve(&s, &l).expect("both classes present by construction");
            (grid.iter().map(|&f| curve.tpr_at(f)).collect(), curve.auc)
        })
        .collect();

    let n = n_resamples as f64;
    let mut tpr_mean = vec![0.0; grid.len()];
    let mut tpr_std = vec![0.0; grid.len()];
    for (curve, _) in &resamples {
        for (m, v) in tpr_mean.iter_mut().zip(curve) {
            *m += v;
        }
    }
    tpr_mean.iter_mut().for_each(|m| *m /= n);
    for (curve, _) in &resamples {
        for ((s, v), m) in tpr_std.iter_mut().zip(curve).zip(&tpr_mean) {
            *s += (v - m) * (v - m);
        }
    }
    tpr_std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    let auc_mean = resamples.iter().map(|(_, a)| a).sum::<f64>() / n;
    let auc_std = (resamples.iter().map(|(_, a)| (a - auc_mean).powi(2)).sum::<f64>() / n).sqrt();

    let tpr: Vec<f64> = grid.iter().map(|&f| full.tpr_at(f)).collect();
    let lower = tpr.iter().zip(&tpr_std).map(|(t, s)| (t - s).clamp(0.0, 1.0)).collect();
    let upper = tpr.iter().zip(&tpr_std).map(|(t, s)| (t + s).clamp(0.0, 1.0)).collect();
    Ok(RocBand {
        fpr_grid: grid,
        tpr,
        tpr_mean,
        tpr_std,
        lower,
        upper,
        auc_mean,
        auc_std,
        n_resamples,
        seed,
    })
}
