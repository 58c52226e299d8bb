//! Exposure and skin-likelihood statistics over the sampled patches.

use crate::imaging::{PatchSet, PlanarImage};
use crate::scalar::Scalar;
use crate::stats::{quartiles, PatchStats};

/// Gray levels strictly below this count as underexposed.
pub const UNDER_EXPOSED_BELOW: f64 = 50.0;
/// Gray levels strictly above this count as overexposed.
pub const OVER_EXPOSED_ABOVE: f64 = 205.0;
/// Per-patch quantities when a patch has no underexposed pixels.
pub const UNDER_EMPTY_SENTINEL: f64 = 50.0;
/// Per-patch quantities when a patch has no overexposed pixels.
pub const OVER_EMPTY_SENTINEL: f64 = 205.0;

fn window_of<T: Scalar>(plane: &[T], width: usize, row: usize, col: usize, size: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(size * size);
    for r in row..row + size {
        out.extend_from_slice(&plane[r * width + col..r * width + col + size]);
    }
    out
}

/// `[median, lower quartile, upper quartile]`, or the sentinel three times.
fn median_quartiles<T: Scalar>(values: &mut [T], sentinel: T) -> [T; 3] {
    match quartiles(values) {
        Some([q1, med, q3]) => [med, q1, q3],
        None => [sentinel; 3],
    }
}

/// Summarizes `per_patch[k][j]` across patches for every quantity `j`,
/// quantity-major: `[q0 mean, q0 median, q0 max, q0 min, q0 std, q1 mean, ...]`.
fn summarize<T: Scalar, const Q: usize>(per_patch: &[[T; Q]], out: &mut [T]) {
    debug_assert_eq!(out.len(), Q * 5);
    let mut column = Vec::with_capacity(per_patch.len());
    for j in 0..Q {
        column.clear();
        column.extend(per_patch.iter().map(|row| row[j]));
        out[j * 5..j * 5 + 5].copy_from_slice(&PatchStats::of(&column).to_array());
    }
}

/// Per patch: median and quartiles of the underexposed gray values, then of
/// the overexposed ones; each of the six summarized across patches.
pub fn exposure_features<T: Scalar>(patches: &PatchSet, gray: &PlanarImage<T>) -> [T; 30] {
    assert!(!patches.is_empty(), "exposure features need at least one patch");
    let under_cut = T::lit(UNDER_EXPOSED_BELOW);
    let over_cut = T::lit(OVER_EXPOSED_ABOVE);
    let per_patch: Vec<[T; 6]> = patches
        .iter()
        .map(|p| {
            let w = gray.window(0, p.row, p.col, p.size);
            let mut under: Vec<T> = w.iter().copied().filter(|&v| v < under_cut).collect();
            let mut over: Vec<T> = w.iter().copied().filter(|&v| v > over_cut).collect();
            let u = median_quartiles(&mut under, T::lit(UNDER_EMPTY_SENTINEL));
            let o = median_quartiles(&mut over, T::lit(OVER_EMPTY_SENTINEL));
            [u[0], u[1], u[2], o[0], o[1], o[2]]
        })
        .collect();
    let mut out = [T::zero(); 30];
    summarize(&per_patch, &mut out);
    out
}

/// Per patch: median and quartiles of the skin log-likelihood scores,
/// summarized across patches.
pub fn likelihood_features<T: Scalar>(patches: &PatchSet, scores: &[T], width: usize) -> [T; 15] {
    assert!(!patches.is_empty(), "likelihood features need at least one patch");
    let per_patch: Vec<[T; 3]> = patches
        .iter()
        .map(|p| {
            let mut w = window_of(scores, width, p.row, p.col, p.size);
            median_quartiles(&mut w, T::zero())
        })
        .collect();
    let mut out = [T::zero(); 15];
    summarize(&per_patch, &mut out);
    out
}

/// Exposure block followed by the likelihood block (45 values).
pub fn lighting_features<T: Scalar>(patches: &PatchSet, gray: &PlanarImage<T>, scores: &[T]) -> Vec<T> {
    let mut out = exposure_features(patches, gray).to_vec();
    out.extend_from_slice(&likelihood_features(patches, scores, gray.width));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{to_color_space, ColorSpace, Image, Patch};

    fn one_patch() -> PatchSet {
        PatchSet {
            patches: vec![Patch { row: 0, col: 0, size: 32, skin_fraction: 1.0 }],
        }
    }

    fn gray_of(img: &Image) -> PlanarImage<f64> {
        to_color_space(img, ColorSpace::Gray)
    }

    #[test]
    fn boundaries_are_strict() {
        // 49 is under, 50 is not; 206 is over, 205 is not.
        let img = Image::from_fn(32, 32, |r, _| match r % 4 {
            0 => [49; 3],
            1 => [50; 3],
            2 => [205; 3],
            _ => [206; 3],
        });
        let f = exposure_features(&one_patch(), &gray_of(&img));
        for q in 0..3 {
            assert_eq!(f[q * 5], 49.0);
            assert_eq!(f[15 + q * 5], 206.0);
        }
    }

    #[test]
    fn sentinels_for_mid_gray() {
        let img = Image::filled(32, 32, [128; 3]);
        let f = exposure_features(&one_patch(), &gray_of(&img));
        assert!(f[..15].iter().step_by(5).all(|&v| v == 50.0));
        assert!(f[15..].iter().step_by(5).all(|&v| v == 205.0));
    }

    #[test]
    fn quartile_layout() {
        // Under set holds 0..=31 once per row: quartiles 7.75, 15.5, 23.25.
        let img = Image::from_fn(32, 32, |_, c| [c as u8; 3]);
        let f = exposure_features(&one_patch(), &gray_of(&img));
        assert_eq!([f[0], f[5], f[10]], [15.5, 7.75, 23.25]);
    }

    #[test]
    fn likelihood_blocks() {
        let scores: Vec<f64> = (0..64 * 64).map(|i| (i % 64) as f64).collect();
        let patches = PatchSet {
            patches: vec![
                Patch { row: 0, col: 0, size: 32, skin_fraction: 1.0 },
                Patch { row: 0, col: 32, size: 32, skin_fraction: 1.0 },
            ],
        };
        let f = likelihood_features(&patches, &scores, 64);
        // Medians 15.5 and 47.5.
        assert_eq!(&f[..5], &[31.5, 31.5, 47.5, 15.5, 16.0]);
    }
}
