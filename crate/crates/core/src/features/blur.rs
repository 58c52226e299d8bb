//! Per-patch sharpness measures: spectral high-pass energy and the variance
//! of the discrete Laplacian.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::imaging::{PatchSet, PlanarImage};
use crate::scalar::Scalar;
use crate::stats::PatchStats;

/// Radial frequency index below which coefficients are removed.
pub const HIGHPASS_CUTOFF: f64 = 4.0;
/// Floor applied to coefficient magnitudes before taking the log.
pub const MAGNITUDE_FLOOR: f64 = 1e-8;

/// Mean log-magnitude of the high-pass filtered spectrum of a square patch.
///
/// The 2-D DFT is taken with DC at the center of the spectrum; every bin
/// whose radial frequency index is below [`HIGHPASS_CUTOFF`] is zeroed and
/// the result is `mean over all bins of 20 ln(max(|c|, eps))`.
pub struct HighpassFilter<T: Scalar> {
    size: usize,
    fft: Arc<dyn Fft<T>>,
    keep: Vec<bool>,
}

impl<T: Scalar> HighpassFilter<T> {
    pub fn new(size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(size);
        let signed = |i: usize| if i < size.div_ceil(2) { i as f64 } else { i as f64 - size as f64 };
        let keep = (0..size * size)
            .map(|idx| {
                let (u, v) = (signed(idx / size), signed(idx % size));
                (u * u + v * v).sqrt() >= HIGHPASS_CUTOFF
            })
            .collect();
        Self { size, fft, keep }
    }

    pub fn magnitude(&self, patch: &[T]) -> T {
        let n = self.size;
        assert_eq!(patch.len(), n * n, "patch must be {n}x{n}");
        let mut buf: Vec<Complex<T>> = patch.iter().map(|&v| Complex::new(v, T::zero())).collect();
        // Rows, then columns via a transpose. The radial mask is symmetric
        // under transposition, so the spectrum is left transposed.
        self.fft.process(&mut buf);
        let mut t = vec![Complex::new(T::zero(), T::zero()); n * n];
        for r in 0..n {
            for c in 0..n {
                t[c * n + r] = buf[r * n + c];
            }
        }
        self.fft.process(&mut t);

        let floor = T::lit(MAGNITUDE_FLOOR);
        let twenty = T::lit(20.0);
        let total: T = t
            .iter()
            .zip(&self.keep)
            .map(|(c, &keep)| {
                let mag = if keep { c.norm() } else { T::zero() };
                twenty * mag.max(floor).ln()
            })
            .sum();
        total / T::from_usize_lossy(n * n)
    }
}

/// Convenience wrapper that plans a transform for a single patch.
pub fn highpass_magnitude<T: Scalar>(patch: &[T], size: usize) -> T {
    HighpassFilter::new(size).magnitude(patch)
}

/// Population variance of the 3x3 Laplacian `[[0,1,0],[1,-4,1],[0,1,0]]`
/// over the valid region of a square patch.
pub fn laplacian_variance<T: Scalar>(patch: &[T], size: usize) -> T {
    assert_eq!(patch.len(), size * size);
    assert!(size >= 3);
    let inner = size - 2;
    let four = T::lit(4.0);
    let mut responses = Vec::with_capacity(inner * inner);
    for r in 1..size - 1 {
        for c in 1..size - 1 {
            let at = |rr: usize, cc: usize| patch[rr * size + cc];
            responses.push(at(r - 1, c) + at(r + 1, c) + at(r, c - 1) + at(r, c + 1) - four * at(r, c));
        }
    }
    let n = T::from_usize_lossy(responses.len());
    let mean = responses.iter().copied().sum::<T>() / n;
    responses.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n
}

/// Both measures per patch, each summarized by the five statistics:
/// `[hp mean, median, max, min, std, lap mean, median, max, min, std]`.
pub fn blur_features<T: Scalar>(patches: &PatchSet, gray: &PlanarImage<T>) -> [T; 10] {
    assert!(!patches.is_empty(), "blur features need at least one patch");
    let size = patches.patches[0].size;
    let filter = HighpassFilter::new(size);
    let mut hp = Vec::with_capacity(patches.count());
    let mut lap = Vec::with_capacity(patches.count());
    for p in patches.iter() {
        let window = gray.window(0, p.row, p.col, p.size);
        hp.push(filter.magnitude(&window));
        lap.push(laplacian_variance(&window, p.size));
    }
    let mut out = [T::zero(); 10];
    out[..5].copy_from_slice(&PatchStats::of(&hp).to_array());
    out[5..].copy_from_slice(&PatchStats::of(&lap).to_array());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{ColorSpace, Patch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_patch(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..1024).map(|_| rng.random_range(0.0..255.0)).collect()
    }

    fn gaussian_blur_5x5(p: &[f64]) -> Vec<f64> {
        let k1 = [1.0, 4.0, 6.0, 4.0, 1.0];
        let mut out = vec![0.0; 1024];
        for r in 0..32i32 {
            for c in 0..32i32 {
                let mut acc = 0.0;
                for dr in -2..=2i32 {
                    for dc in -2..=2i32 {
                        let rr = (r + dr).clamp(0, 31) as usize;
                        let cc = (c + dc).clamp(0, 31) as usize;
                        acc += k1[(dr + 2) as usize] * k1[(dc + 2) as usize] * p[rr * 32 + cc];
                    }
                }
                out[(r * 32 + c) as usize] = acc / 256.0;
            }
        }
        out
    }

    /// Direct O(N^4) DFT, used as an independent route for the spectrum.
    fn naive_highpass(p: &[f64]) -> f64 {
        let n = 32usize;
        let mut total = 0.0;
        for u in 0..n {
            for v in 0..n {
                let (mut re, mut im) = (0.0, 0.0);
                for x in 0..n {
                    for y in 0..n {
                        let ang = -2.0 * std::f64::consts::PI * ((u * x) as f64 / n as f64 + (v * y) as f64 / n as f64);
                        re += p[x * n + y] * ang.cos();
                        im += p[x * n + y] * ang.sin();
                    }
                }
                let fu = if u < 16 { u as f64 } else { u as f64 - 32.0 };
                let fv = if v < 16 { v as f64 } else { v as f64 - 32.0 };
                let mag = if (fu * fu + fv * fv).sqrt() < 4.0 { 0.0 } else { (re * re + im * im).sqrt() };
                total += 20.0 * mag.max(1e-8).ln();
            }
        }
        total / 1024.0
    }

    #[test]
    fn constant_patch_hits_the_floor() {
        let v = highpass_magnitude(&vec![173.0f64; 1024], 32);
        assert!((v - 20.0 * 1e-8f64.ln()).abs() < 1e-9);
        assert_eq!(laplacian_variance(&vec![173.0f64; 1024], 32), 0.0);
    }

    #[test]
    fn matches_direct_dft() {
        let p = noise_patch(1);
        let fast = highpass_magnitude(&p, 32);
        let slow = naive_highpass(&p);
        assert!((fast - slow).abs() < 1e-9 * slow.abs());
    }

    #[test]
    fn dc_offset_is_invisible() {
        let p = noise_patch(2);
        let shifted: Vec<f64> = p.iter().map(|v| v + 37.5).collect();
        assert!((highpass_magnitude(&p, 32) - highpass_magnitude(&shifted, 32)).abs() < 1e-9);
    }

    #[test]
    fn blur_lowers_highpass_energy() {
        let filter = HighpassFilter::<f64>::new(32);
        for seed in 0..100 {
            let p = noise_patch(seed);
            let b = gaussian_blur_5x5(&p);
            assert!(filter.magnitude(&p) > filter.magnitude(&b), "seed {seed}");
        }
    }

    #[test]
    fn ramp_has_zero_laplacian_variance() {
        let ramp: Vec<f64> = (0..1024).map(|i| 1.5 * (i % 32) as f64 - 0.75 * (i / 32) as f64 + 3.0).collect();
        assert!(laplacian_variance(&ramp, 32).abs() < 1e-20);
    }

    #[test]
    fn laplacian_matches_loop_oracle() {
        let p = noise_patch(3);
        let kernel = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
        let mut resp = Vec::new();
        for r in 0..30 {
            for c in 0..30 {
                let mut acc = 0.0;
                for (kr, krow) in kernel.iter().enumerate() {
                    for (kc, kv) in krow.iter().enumerate() {
                        acc += kv * p[(r + kr) * 32 + c + kc];
                    }
                }
                resp.push(acc);
            }
        }
        let m = resp.iter().sum::<f64>() / 900.0;
        let var = resp.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 900.0;
        assert!((laplacian_variance(&p, 32) - var).abs() < 1e-10 * var);
    }

    #[test]
    fn singleton_patch_set() {
        let img = crate::imaging::Image::from_fn(40, 40, |r, c| [((r * 7 + c * 13) % 256) as u8; 3]);
        let gray: PlanarImage<f64> = crate::imaging::to_color_space(&img, ColorSpace::Gray);
        let set = PatchSet {
            patches: vec![Patch { row: 3, col: 5, size: 32, skin_fraction: 1.0 }],
        };
        let f = blur_features(&set, &gray);
        assert_eq!(f.len(), 10);
        let w = gray.window(0, 3, 5, 32);
        let hp = highpass_magnitude(&w, 32);
        let lap = laplacian_variance(&w, 32);
        assert_eq!(f, [hp, hp, hp, hp, 0.0, lap, lap, lap, lap, 0.0]);
    }
}
