use image::imageops::{self, FilterType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Labels};
use crate::imaging::{gray_u8, Image};

/// Smallest side accepted by [`augment_crop`].
pub const MIN_CROP_SIDE: usize = 64;

/// Parameter ranges for the synthetic distortions. All ranges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Odd Gaussian kernel sizes; sigma is size / 6.
    pub blur_kernel: (usize, usize),
    /// Crop side as a fraction of each image dimension.
    pub crop_fraction: (f64, f64),
    /// Mean gray level targeted by the darkening transform.
    pub dark_mean_gray: (f64, f64),
    /// Upper bound on the darkened mean as a fraction of the original mean;
    /// keeps already dark photos from being left nearly unchanged.
    pub dark_relative: (f64, f64),
    pub dark_gamma: (f64, f64),
    pub glare_gain: (f64, f64),
    /// The global gain is reduced so the mean gray level stays at or below
    /// this value; highlights then add local saturation.
    pub glare_max_mean_gray: f64,
    /// Peak additive brightness of each glare highlight.
    pub glare_amplitude: (f64, f64),
    pub glare_blobs: (usize, usize),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            blur_kernel: (5, 21),
            crop_fraction: (0.3, 0.5),
            dark_mean_gray: (32.0, 48.0),
            dark_relative: (0.3, 0.45),
            dark_gamma: (1.2, 1.6),
            glare_gain: (1.15, 1.35),
            glare_max_mean_gray: 185.0,
            glare_amplitude: (90.0, 160.0),
            glare_blobs: (1, 3),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let (k0, k1) = self.blur_kernel;
        let bad = |m: &str| Err(DataError::Invalid(m.to_string()));
        if k0 < 3 || k0 % 2 == 0 || k1 % 2 == 0 || k1 < k0 {
            return bad("blur kernel range must be odd sizes >= 3");
        }
        let (c0, c1) = self.crop_fraction;
        if !(c0 > 0.0 && c0 <= c1 && c1 < 1.0) {
            return bad("crop fraction range must lie in (0, 1)");
        }
        if !(self.dark_mean_gray.0 > 0.0 && self.dark_mean_gray.0 <= self.dark_mean_gray.1) {
            return bad("dark mean gray range is empty");
        }
        if !(self.dark_relative.0 > 0.0 && self.dark_relative.0 <= self.dark_relative.1 && self.dark_relative.1 <= 1.0) {
            return bad("dark relative range must lie in (0, 1]");
        }
        if !(self.glare_gain.0 >= 1.0 && self.glare_gain.0 <= self.glare_gain.1) {
            return bad("glare gain range must be at least 1");
        }
        if self.glare_blobs.0 > self.glare_blobs.1 {
            return bad("glare blob range is empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurParams {
    pub kernel_size: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropParams {
    pub corner: Corner,
    pub fraction: f64,
    /// Cropped window `(x, y, width, height)` in source pixels.
    pub window: (usize, usize, usize, usize),
}

/// Normalized 1-D Gaussian weights.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with edge clamping, rounded back to 8 bits.
pub fn gaussian_blur(img: &Image, size: usize, sigma: f64) -> Image {
    let kernel = gaussian_kernel(size, sigma);
    let half = (size / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let data = img.data();
    let mut tmp = vec![0.0f64; w * h * 3];
    for r in 0..h {
        for c in 0..w {
            let mut acc = [0.0; 3];
            for (k, wt) in kernel.iter().enumerate() {
                let cc = (c as isize + k as isize - half).clamp(0, w as isize - 1) as usize;
                let base = (r * w + cc) * 3;
                for ch in 0..3 {
                    acc[ch] += wt * f64::from(data[base + ch]);
                }
            }
            tmp[(r * w + c) * 3..(r * w + c) * 3 + 3].copy_from_slice(&acc);
        }
    }
    let mut out = vec![0u8; w * h * 3];
    for r in 0..h {
        for c in 0..w {
            let mut acc = [0.0; 3];
            for (k, wt) in kernel.iter().enumerate() {
                let rr = (r as isize + k as isize - half).clamp(0, h as isize - 1) as usize;
                let base = (rr * w + c) * 3;
                for ch in 0..3 {
                    acc[ch] += wt * tmp[base + ch];
                }
            }
            for ch in 0..3 {
                out[(r * w + c) * 3 + ch] = acc[ch].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Image::new(w, h, out).expect("same dimensions")
}

pub fn augment_blur(img: &Image, config: &AugmentConfig, seed: u64) -> (Image, Labels, BlurParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k0, k1) = config.blur_kernel;
    let kernel_size = k0 + 2 * rng.random_range(0..=(k1 - k0) / 2);
    let sigma = kernel_size as f64 / 6.0;
    (gaussian_blur(img, kernel_size, sigma), Labels::BLURRY, BlurParams { kernel_size, sigma })
}

pub fn augment_crop(img: &Image, config: &AugmentConfig, seed: u64) -> Result<(Image, Labels, CropParams), DataError> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_CROP_SIDE || h < MIN_CROP_SIDE {
        return Err(DataError::ImageTooSmall(format!("{w}x{h}, need {MIN_CROP_SIDE}x{MIN_CROP_SIDE}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corner = [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight][rng.random_range(0..4)];
    let fraction = rng.random_range(config.crop_fraction.0..=config.crop_fraction.1);
    let cw = ((fraction * w as f64).round() as usize).clamp(1, w);
    let ch = ((fraction * h as f64).round() as usize).clamp(1, h);
    let (x, y) = match corner {
        Corner::TopLeft => (0, 0),
        Corner::TopRight => (w - cw, 0),
        Corner::BottomLeft => (0, h - ch),
        Corner::BottomRight => (w - cw, h - ch),
    };
    let src = img.to_rgb_image();
    let window = imageops::crop_imm(&src, x as u32, y as u32, cw as u32, ch as u32).to_image();
    let resized = imageops::resize(&window, w as u32, h as u32, FilterType::Triangle);
    Ok((
        Image::from_rgb_image(resized),
        Labels::POOR_ZOOM_CROP,
        CropParams { corner, fraction, window: (x, y, cw, ch) },
    ))
}

fn mean_gray(img: &Image) -> f64 {
    img.pixels().map(|p| f64::from(gray_u8(p))).sum::<f64>() / img.pixel_count() as f64
}

/// Gamma darkening followed by a gain that brings the mean gray level to
/// the smaller of a drawn absolute level and a drawn fraction of the
/// original mean.
pub fn augment_dark(img: &Image, config: &AugmentConfig, seed: u64) -> (Image, Labels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = rng.random_range(config.dark_gamma.0..=config.dark_gamma.1);
    let absolute = rng.random_range(config.dark_mean_gray.0..=config.dark_mean_gray.1);
    let relative = rng.random_range(config.dark_relative.0..=config.dark_relative.1);
    let target = absolute.min(relative * mean_gray(img));
    let lut: Vec<f64> = (0..256).map(|v| 255.0 * (v as f64 / 255.0).powf(gamma)).collect();
    let gammaed: Vec<[f64; 3]> = img.pixels().map(|p| p.map(|v| lut[v as usize])).collect();
    let mean: f64 =
        gammaed.iter().map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b).sum::<f64>() / img.pixel_count() as f64;
    let gain = if mean > 0.0 { target / mean } else { 1.0 };
    let data = gammaed
        .iter()
        .flat_map(|p| p.map(|v| (v * gain).round().clamp(0.0, 255.0) as u8))
        .collect();
    (Image::new(img.width(), img.height(), data).expect("same dimensions"), Labels::POOR_LIGHTING)
}

/// Global gain (capped by the configured mean gray level) plus one or more
/// broad additive highlights.
pub fn augment_glare(img: &Image, config: &AugmentConfig, seed: u64) -> (Image, Labels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (img.width(), img.height());
    let drawn = rng.random_range(config.glare_gain.0..=config.glare_gain.1);
    let mean = mean_gray(img);
    let gain = if mean * drawn > config.glare_max_mean_gray { (config.glare_max_mean_gray / mean).max(1.0) } else { drawn };
    let n_blobs = rng.random_range(config.glare_blobs.0..=config.glare_blobs.1);
    let side = w.min(h) as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            let cx = rng.random_range(0.2..0.8) * w as f64;
            let cy = rng.random_range(0.2..0.8) * h as f64;
            let sigma = rng.random_range(0.15..0.3) * side;
            let amp = rng.random_range(config.glare_amplitude.0..=config.glare_amplitude.1);
            (cx, cy, sigma, amp)
        })
        .collect();
    let out = Image::from_fn(w, h, |r, c| {
        let lift: f64 = blobs
            .iter()
            .map(|&(cx, cy, s, a)| {
                let d2 = (c as f64 - cx).powi(2) + (r as f64 - cy).powi(2);
                a * (-d2 / (2.0 * s * s)).exp()
            })
            .sum();
        img.pixel(r, c).map(|v| (f64::from(v) * gain + lift).round().clamp(0.0, 255.0) as u8)
    });
    (out, Labels::POOR_LIGHTING)
}
