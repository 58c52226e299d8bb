//! Raster decoding, color-space conversion and skin-patch sampling.
//!
//! All conversions work from 8-bit sRGB triples. The constants are pinned in
//! `COLOR.md` at the repository root; every conversion is evaluated in `f64`
//! and only then cast to the caller's scalar type, so `f32` and `f64`
//! pipelines see the same quantized inputs.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::segmentation::SegmentationMask;

/// Side length of the square patches used by every patch-level feature.
pub const PATCH_SIZE: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("unsupported image: {0}")]
    UnsupportedFormat(String),
    #[error("no skin detected")]
    NoSkinDetected,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::DimensionMismatch("empty raster".into()));
        }
        if data.len() != width * height * 3 {
            return Err(ImagingError::DimensionMismatch(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for row in 0..height {
            for col in 0..width {
                data.extend_from_slice(&f(row, col));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixel_at(row * self.width + col)
    }

    #[inline]
    pub fn pixel_at(&self, index: usize) -> [u8; 3] {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Rejects rasters smaller than one patch in either dimension.
    pub fn ensure_min_size(&self, min_side: usize) -> Result<(), ImagingError> {
        if self.width < min_side || self.height < min_side {
            return Err(ImagingError::UnsupportedFormat(format!(
                "image too small: {}x{} (minimum {min_side}x{min_side})",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb_image(img: image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        Self {
            width: w as usize,
            height: h as usize,
            data: img.into_raw(),
        }
    }

    /// Lossless PNG encoding.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding cannot fail");
        out.into_inner()
    }
}

/// Decodes a PNG or JPEG stream to 8-bit RGB. Alpha is dropped and gray
/// sources are expanded.
pub fn decode_image(bytes: &[u8]) -> Result<Image, ImagingError> {
    if bytes.is_empty() {
        return Err(ImagingError::MalformedImage("empty input".into()));
    }
    let format = image::guess_format(bytes)
        .map_err(|_| ImagingError::MalformedImage("unrecognized image signature".into()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(ImagingError::UnsupportedFormat(format!("{format:?} is not PNG or JPEG")));
    }
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ImagingError::MalformedImage(e.to_string()))?;
    Ok(Image::from_rgb_image(decoded.to_rgb8()))
}

/// Decodes and enforces the minimum patch-sized raster the pipeline needs.
pub fn decode_for_assessment(bytes: &[u8]) -> Result<Image, ImagingError> {
    let img = decode_image(bytes)?;
    img.ensure_min_size(PATCH_SIZE)?;
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    YCrCb,
    Hsv,
    Lab,
    Gray,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            _ => 3,
        }
    }
}

/// One real-valued plane per channel of `space`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage<T> {
    pub space: ColorSpace,
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Vec<T>>,
}

impl<T: Scalar> PlanarImage<T> {
    pub fn plane(&self, channel: usize) -> &[T] {
        &self.planes[channel]
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> T {
        self.planes[channel][row * self.width + col]
    }

    /// Copies a square window of one channel in row-major order.
    pub fn window(&self, channel: usize, row: usize, col: usize, size: usize) -> Vec<T> {
        let plane = &self.planes[channel];
        let mut out = Vec::with_capacity(size * size);
        for r in row..row + size {
            let start = r * self.width + col;
            out.extend_from_slice(&plane[start..start + size]);
        }
        out
    }
}

/// BT.601 luma rounded to the nearest integer, computed exactly in integers.
#[inline]
pub fn gray_u8(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

/// Full-range BT.601 (JFIF) YCrCb, all channels on the 0..=255 scale.
#[inline]
pub fn rgb_to_ycrcb(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(f64::from);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    [y, cr, cb]
}

/// Inverse of [`rgb_to_ycrcb`], rounded and clamped to 8 bits.
pub fn ycrcb_to_rgb(ycrcb: [f64; 3]) -> [u8; 3] {
    let [y, cr, cb] = ycrcb;
    let r = y + 1.402 * (cr - 128.0);
    let g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0);
    let b = y + 1.772 * (cb - 128.0);
    [r, g, b].map(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// Hexagonal HSV: hue in degrees `[0, 360)`, saturation in `[0, 1]`, value on
/// the 0..=255 scale. Achromatic pixels get hue 0; when two channels share
/// the maximum, red wins over green and green over blue.
#[inline]
pub fn rgb_to_hsv(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        let h = 60.0 * ((g - b) / delta);
        if h < 0.0 {
            h + 360.0
        } else {
            h
        }
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    [h, s, max]
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

#[inline]
fn srgb_to_linear(v: u8) -> f64 {
    let c = f64::from(v) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

struct LinearLut([f64; 256]);

impl LinearLut {
    fn get() -> &'static LinearLut {
        static LUT: std::sync::OnceLock<LinearLut> = std::sync::OnceLock::new();
        LUT.get_or_init(|| {
            let mut t = [0.0; 256];
            for (i, v) in t.iter_mut().enumerate() {
                *v = srgb_to_linear(i as u8);
            }
            LinearLut(t)
        })
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIE L*a*b* from sRGB through XYZ with a D65 white point.
#[inline]
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lut = &LinearLut::get().0;
    let lin = rgb.map(|v| lut[v as usize]);
    let mut xyz = [0.0; 3];
    for (i, row) in SRGB_TO_XYZ.iter().enumerate() {
        xyz[i] = (row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]) / D65_WHITE[i];
    }
    let [fx, fy, fz] = xyz.map(lab_f);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts a raster to the planes of `space`.
pub fn to_color_space<T: Scalar>(img: &Image, space: ColorSpace) -> PlanarImage<T> {
    let n = img.pixel_count();
    let mut planes: Vec<Vec<T>> = (0..space.channels()).map(|_| Vec::with_capacity(n)).collect();
    for px in img.pixels() {
        match space {
            ColorSpace::Gray => planes[0].push(T::lit(f64::from(gray_u8(px)))),
            _ => {
                let v = match space {
                    ColorSpace::YCrCb => rgb_to_ycrcb(px),
                    ColorSpace::Hsv => rgb_to_hsv(px),
                    _ => rgb_to_lab(px),
                };
                for (plane, x) in planes.iter_mut().zip(v) {
                    plane.push(T::lit(x));
                }
            }
        }
    }
    PlanarImage {
        space,
        width: img.width(),
        height: img.height(),
        planes,
    }
}

/// Normalized `[Y, Cr, Cb, H, S, V]` vector of one RGB triple, every
/// component scaled to `[0, 1]`.
#[inline]
pub fn skin_vector_rgb(rgb: [u8; 3]) -> [f64; 6] {
    let [y, cr, cb] = rgb_to_ycrcb(rgb);
    let [h, s, v] = rgb_to_hsv(rgb);
    [y / 255.0, cr / 255.0, cb / 255.0, h / 360.0, s, v / 255.0]
}

/// The 6-vector fed to the skin model for pixel `px` (row-major index).
pub fn concat_skin_vector<T: Scalar>(img: &Image, px: usize) -> [T; 6] {
    skin_vector_rgb(img.pixel_at(px)).map(T::lit)
}

/// A square window whose top-left corner is `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub size: usize,
    pub skin_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn count(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Patch> {
        self.patches.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSampling {
    pub count: usize,
    pub size: usize,
    pub min_skin_fraction: f64,
}

impl Default for PatchSampling {
    fn default() -> Self {
        Self {
            count: 100,
            size: PATCH_SIZE,
            min_skin_fraction: 0.9,
        }
    }
}

/// Summed-area table over a boolean mask, `(w+1) x (h+1)`.
pub(crate) struct IntegralMask {
    stride: usize,
    sums: Vec<u32>,
}

impl IntegralMask {
    pub(crate) fn new(labels: &[bool], width: usize, height: usize) -> Self {
        let stride = width + 1;
        let mut sums = vec![0u32; stride * (height + 1)];
        for r in 0..height {
            let mut row_sum = 0u32;
            for c in 0..width {
                row_sum += u32::from(labels[r * width + c]);
                sums[(r + 1) * stride + c + 1] = sums[r * stride + c + 1] + row_sum;
            }
        }
        Self { stride, sums }
    }

    /// Number of set labels in `rows x cols` starting at `(row, col)`.
    #[inline]
    pub(crate) fn count(&self, row: usize, col: usize, rows: usize, cols: usize) -> u32 {
        let s = self.stride;
        let (r0, c0, r1, c1) = (row, col, row + rows, col + cols);
        self.sums[r1 * s + c1] + self.sums[r0 * s + c0] - self.sums[r0 * s + c1] - self.sums[r1 * s + c0]
    }
}

/// Samples up to `sampling.count` distinct windows whose skin fraction is at
/// least `sampling.min_skin_fraction`, uniformly over all valid top-left
/// positions and without replacement. When fewer valid positions exist,
/// every one of them is returned. Output is ordered by `(row, col)`.
pub fn sample_skin_patches<T: Scalar>(
    img: &Image,
    mask: &SegmentationMask<T>,
    sampling: &PatchSampling,
    seed: u64,
) -> Result<PatchSet, ImagingError> {
    if mask.width != img.width() || mask.height != img.height() {
        return Err(ImagingError::DimensionMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.width,
            mask.height,
            img.width(),
            img.height()
        )));
    }
    let size = sampling.size;
    img.ensure_min_size(size)?;

    let integral = IntegralMask::new(&mask.labels, mask.width, mask.height);
    let area = (size * size) as f64;
    let fraction = |row: usize, col: usize| f64::from(integral.count(row, col, size, size)) / area;

    let mut valid: Vec<(u32, u32)> = Vec::new();
    for row in 0..=img.height() - size {
        for col in 0..=img.width() - size {
            if fraction(row, col) >= sampling.min_skin_fraction {
                valid.push((row as u32, col as u32));
            }
        }
    }
    if valid.is_empty() {
        return Err(ImagingError::NoSkinDetected);
    }

    let chosen: Vec<usize> = if valid.len() <= sampling.count {
        (0..valid.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample_indices(&mut rng, valid.len(), sampling.count).into_vec();
        idx.sort_unstable();
        idx
    };

    let patches = chosen
        .into_iter()
        .map(|i| {
            let (row, col) = (valid[i].0 as usize, valid[i].1 as usize);
            Patch {
                row,
                col,
                size,
                skin_fraction: fraction(row, col),
            }
        })
        .collect();
    Ok(PatchSet { patches })
}
