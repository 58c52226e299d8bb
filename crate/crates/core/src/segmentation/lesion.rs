use serde::{Deserialize, Serialize};

use super::{MaskKind, SegmentationError, SegmentationMask};
use crate::imaging::{rgb_to_lab, Image};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LesionOptions {
    /// Side of the centered box as a fraction of each image dimension.
    pub center_box: f64,
    /// Fraction of brightest pixels kept per LAB channel.
    pub top_quantile: f64,
}

impl Default for LesionOptions {
    fn default() -> Self {
        Self {
            center_box: 0.5,
            top_quantile: 0.10,
        }
    }
}

/// Half-open `(row0, row1, col0, col1)` of the centered box.
pub fn center_box_bounds(width: usize, height: usize, fraction: f64) -> (usize, usize, usize, usize) {
    let bh = ((fraction * height as f64).round() as usize).clamp(1, height);
    let bw = ((fraction * width as f64).round() as usize).clamp(1, width);
    let r0 = (height - bh) / 2;
    let c0 = (width - bw) / 2;
    (r0, r0 + bh, c0, c0 + bw)
}

/// Smallest value among the top `ceil(q * n)` entries; every value tied with
/// it is a candidate too.
fn top_cutoff<T: Scalar>(values: &[T], q: f64) -> T {
    let n = values.len();
    let keep = ((q * n as f64).ceil() as usize).clamp(1, n);
    let mut scratch = values.to_vec();
    let (_, v, _) = scratch.select_nth_unstable_by(n - keep, |a, b| a.partial_cmp(b).expect("finite"));
    *v
}

/// Per LAB channel: the cutoff of its brightest pixels and the fraction of
/// those pixels that fall inside the center box.
pub fn lesion_channel_fractions<T: Scalar>(
    lab: &[Vec<T>; 3],
    width: usize,
    height: usize,
    options: &LesionOptions,
) -> [(T, f64); 3] {
    let (r0, r1, c0, c1) = center_box_bounds(width, height, options.center_box);
    std::array::from_fn(|ch| {
        let plane = &lab[ch];
        let cutoff = top_cutoff(plane, options.top_quantile);
        let mut total = 0usize;
        let mut inside = 0usize;
        for (i, &v) in plane.iter().enumerate() {
            if v >= cutoff {
                total += 1;
                let (r, c) = (i / width, i % width);
                if (r0..r1).contains(&r) && (c0..c1).contains(&c) {
                    inside += 1;
                }
            }
        }
        (cutoff, inside as f64 / total as f64)
    })
}

/// Lesion mask: the brightest-pixel set of the LAB channel whose candidates
/// concentrate most in the image center, intersected with the skin mask.
/// Ties between channels go to the lower channel index.
pub fn segment_lesion<T: Scalar>(
    img: &Image,
    skin: &SegmentationMask<T>,
    options: &LesionOptions,
) -> Result<SegmentationMask<T>, SegmentationError> {
    if skin.width != img.width() || skin.height != img.height() {
        return Err(SegmentationError::DimensionMismatch("skin mask and image differ in size".into()));
    }
    if skin.is_empty() {
        return Err(SegmentationError::NoSkinDetected);
    }
    let n = img.pixel_count();
    let mut lab: [Vec<T>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
    for px in img.pixels() {
        let v = rgb_to_lab(px);
        for ch in 0..3 {
            lab[ch].push(T::lit(v[ch]));
        }
    }
    let fractions = lesion_channel_fractions(&lab, img.width(), img.height(), options);
    let mut best = 0;
    for ch in 1..3 {
        if fractions[ch].1 > fractions[best].1 {
            best = ch;
        }
    }
    let cutoff = fractions[best].0;
    let scores = std::mem::take(&mut lab[best]);
    let labels = scores
        .iter()
        .zip(&skin.labels)
        .map(|(&v, &s)| s && v >= cutoff)
        .collect();
    Ok(SegmentationMask {
        width: img.width(),
        height: img.height(),
        labels,
        scores,
        kind: MaskKind::Lesion,
        threshold: cutoff,
        border: skin.border,
        lesion_channel: Some(best),
    })
}
