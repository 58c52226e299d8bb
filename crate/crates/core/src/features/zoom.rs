use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::segmentation::{center_box_bounds, SegmentationMask};

pub const DEFAULT_GENEROUS_DELTA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomFeatures {
    pub skin_ratio: f64,
    pub lesion_ratio: f64,
}

impl ZoomFeatures {
    pub fn to_array<T: Scalar>(self) -> [T; 2] {
        [T::lit(self.skin_ratio), T::lit(self.lesion_ratio)]
    }
}

fn box_ratio(labels: &[bool], width: usize, height: usize, center_box: f64) -> f64 {
    let (r0, r1, c0, c1) = center_box_bounds(width, height, center_box);
    let mut hit = 0usize;
    for r in r0..r1 {
        hit += labels[r * width + c0..r * width + c1].iter().filter(|&&l| l).count();
    }
    hit as f64 / ((r1 - r0) * (c1 - c0)) as f64
}

/// Skin and lesion coverage of the centered box after relaxing the skin cutoff
/// by `generous_delta`. The lesion mask keeps its own channel cutoff and is
/// re-intersected with the relaxed skin mask.
pub fn zoom_features<T: Scalar>(
    skin: &SegmentationMask<T>,
    lesion: &SegmentationMask<T>,
    center_box: f64,
    generous_delta: f64,
) -> ZoomFeatures {
    assert_eq!((skin.width, skin.height), (lesion.width, lesion.height), "masks must align");
    let generous = skin.relabel(skin.threshold - T::lit(generous_delta));
    let lesion_labels: Vec<bool> = lesion
        .scores
        .iter()
        .zip(&generous.labels)
        .map(|(&v, &s)| s && v >= lesion.threshold)
        .collect();
    ZoomFeatures {
        skin_ratio: box_ratio(&generous.labels, skin.width, skin.height, center_box),
        lesion_ratio: box_ratio(&lesion_labels, skin.width, skin.height, center_box),
    }
}
