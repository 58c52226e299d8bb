//! Procedural skin photographs with known skin and lesion regions, and the
//! labeled corpus built from them.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    augment_blur, augment_crop, augment_dark, augment_glare, split_dataset, AugmentConfig, DataError, DatasetRecord,
    Labels, Manifest, Source, SplitRatios,
};
use crate::imaging::Image;
use crate::seed::derive_seed;
use crate::segmentation::pixels::{write_skin_pixels_csv, SkinToneSampler};

/// A rendered photo plus its ground-truth regions.
#[derive(Debug, Clone)]
pub struct RenderedImage {
    pub image: Image,
    pub skin: Vec<bool>,
    pub lesion: Vec<bool>,
}

const BACKGROUNDS: [[f64; 3]; 6] = [
    [60.0, 90.0, 160.0],
    [50.0, 130.0, 120.0],
    [70.0, 140.0, 70.0],
    [110.0, 80.0, 150.0],
    [40.0, 60.0, 90.0],
    [150.0, 170.0, 205.0],
];

const LESION_TINTS: [[f64; 3]; 3] = [[165.0, 55.0, 65.0], [105.0, 62.0, 45.0], [140.0, 50.0, 90.0]];

/// Smooth noise in [-1, 1]: random values on a grid of `cell` pixels,
/// bilinearly interpolated.
fn value_noise(w: usize, h: usize, cell: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        let y = r as f64 / cell;
        let (y0, fy) = (y.floor() as usize, y.fract());
        for c in 0..w {
            let x = c as f64 / cell;
            let (x0, fx) = (x.floor() as usize, x.fract());
            let g = |yy: usize, xx: usize| grid[yy * gw + xx];
            let top = g(y0, x0) * (1.0 - fx) + g(y0, x0 + 1) * fx;
            let bottom = g(y0 + 1, x0) * (1.0 - fx) + g(y0 + 1, x0 + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Textured skin region with a centered lesion on a colored background.
pub fn render_good_image(width: usize, height: usize, seed: u64) -> RenderedImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = SkinToneSampler::default();
    let (w, h) = (width as f64, height as f64);
    let side = w.min(h);

    let light = rng.random_range(0.85..1.05);
    let tone = sampler.tone_at(rng.random::<f64>()).map(|v| v * light);
    let bg_base = BACKGROUNDS[rng.random_range(0..BACKGROUNDS.len())];
    let bg_gain = rng.random_range(0.75..1.15);
    let bg = bg_base.map(|v| v * bg_gain);

    let (cx, cy) = (w * rng.random_range(0.46..0.54), h * rng.random_range(0.46..0.54));
    let (ax, ay) = (w * rng.random_range(0.36..0.44), h * rng.random_range(0.36..0.44));
    let wobble_phase = rng.random_range(0.0..std::f64::consts::TAU);

    let (lx, ly) = (w * rng.random_range(0.45..0.55), h * rng.random_range(0.45..0.55));
    let (la, lb) = (side * rng.random_range(0.06..0.12), side * rng.random_range(0.06..0.12));
    let lrot = rng.random_range(0.0..std::f64::consts::PI);
    let tint = LESION_TINTS[rng.random_range(0..LESION_TINTS.len())];
    let lesion_mix = rng.random_range(0.55..0.8);
    let lesion_color: [f64; 3] = std::array::from_fn(|c| tone[c] * (1.0 - lesion_mix) + tint[c] * lesion_mix * light);

    let shade = value_noise(width, height, 64.0, &mut rng);
    let mottle = value_noise(width, height, 6.0, &mut rng);
    let bg_noise = value_noise(width, height, 24.0, &mut rng);
    let grain = Normal::new(0.0, 5.0).expect("valid std");
    let sensor = Normal::new(0.0, 2.0).expect("valid std");

    let mut data = Vec::with_capacity(width * height * 3);
    let mut skin = Vec::with_capacity(width * height);
    let mut lesion = Vec::with_capacity(width * height);
    let (cos, sin) = (lrot.cos(), lrot.sin());
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            let (dx, dy) = ((x - cx) / ax, (y - cy) / ay);
            let theta = dy.atan2(dx);
            let radius = 1.0 + 0.05 * (3.0 * theta + wobble_phase).sin();
            let in_skin = dx * dx + dy * dy <= radius * radius;

            let (ux, uy) = (x - lx, y - ly);
            let (u, v) = ((ux * cos + uy * sin) / la, (-ux * sin + uy * cos) / lb);
            let ld = (u * u + v * v).sqrt();
            // Soft lesion edge over roughly two pixels.
            let lesion_alpha = if in_skin { ((1.0 - ld) * la.min(lb) / 2.0 + 0.5).clamp(0.0, 1.0) } else { 0.0 };

            let px: [f64; 3] = if in_skin {
                let gain = 1.0 + 0.08 * shade[i] + 0.06 * mottle[i];
                let g = grain.sample(&mut rng);
                let pore = if rng.random_bool(0.02) { 0.85 } else { 1.0 };
                std::array::from_fn(|ch| {
                    let base = tone[ch] * (1.0 - lesion_alpha) + lesion_color[ch] * lesion_alpha;
                    base * gain * pore + g
                })
            } else {
                let gain = 1.0 + 0.1 * bg_noise[i];
                let g = grain.sample(&mut rng) * 0.6;
                std::array::from_fn(|ch| bg[ch] * gain + g)
            };
            for v in px {
                data.push((v + sensor.sample(&mut rng)).round().clamp(0.0, 255.0) as u8);
            }
            skin.push(in_skin);
            lesion.push(lesion_alpha >= 0.5);
        }
    }
    RenderedImage {
        image: Image::new(width, height, data).expect("buffer sized to dimensions"),
        skin,
        lesion,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusOptions {
    pub n_good: usize,
    pub seed: u64,
    /// Nominal image size; each image varies by up to 10% per side.
    pub width: usize,
    pub height: usize,
    pub ratios: SplitRatios,
    pub augment: AugmentConfig,
    /// Skin pixels sampled from training-split renders for the skin model.
    pub skin_pixels: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            n_good: 100,
            seed: 7,
            width: 256,
            height: 256,
            ratios: SplitRatios::default(),
            augment: AugmentConfig::default(),
            skin_pixels: 40_000,
        }
    }
}

pub const MIN_CORPUS_GOOD: usize = 20;

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: Manifest,
    /// Images in manifest order, keyed by record path.
    pub images: Vec<(String, Image)>,
    pub skin_pixels: Vec<[u8; 3]>,
}

struct Family {
    good: RenderedImage,
    blur: Image,
    light: Image,
    crop: Image,
}

const STREAM_RENDER: u64 = 1;
const STREAM_BLUR: u64 = 2;
const STREAM_LIGHT: u64 = 3;
const STREAM_CROP: u64 = 4;
const STREAM_PIXELS: u64 = 5;
const STREAM_SIZE: u64 = 6;

/// `n_good` originals split before augmentation, each followed by a blurred,
/// a badly lit (alternately dark and glared) and a corner-cropped copy.
pub fn generate_synthetic_corpus(opts: &CorpusOptions) -> Result<SyntheticCorpus, DataError> {
    if opts.n_good < MIN_CORPUS_GOOD {
        return Err(DataError::Invalid(format!(
            "n_good = {} is below the minimum of {MIN_CORPUS_GOOD}",
            opts.n_good
        )));
    }
    opts.augment.validate()?;
    let originals = Manifest::new(
        (0..opts.n_good)
            .map(|i| DatasetRecord::new(format!("images/{i:04}_good.png"), Labels::GOOD, Source::Synthetic))
            .collect(),
    );
    let split = split_dataset(&originals, opts.ratios, opts.seed)?;

    let families: Vec<Family> = (0..opts.n_good as u64)
        .into_par_iter()
        .map(|i| -> Result<Family, DataError> {
            let mut size_rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_SIZE, i));
            let jitter = |n: usize, rng: &mut ChaCha8Rng| ((n as f64) * rng.random_range(0.9..=1.1)).round() as usize;
            let (w, h) = (jitter(opts.width, &mut size_rng), jitter(opts.height, &mut size_rng));
            let good = render_good_image(w, h, derive_seed(opts.seed, STREAM_RENDER, i));
            let blur = augment_blur(&good.image, &opts.augment, derive_seed(opts.seed, STREAM_BLUR, i)).0;
            let light_seed = derive_seed(opts.seed, STREAM_LIGHT, i);
            let light = if i % 2 == 0 {
                augment_dark(&good.image, &opts.augment, light_seed).0
            } else {
                augment_glare(&good.image, &opts.augment, light_seed).0
            };
            let crop = augment_crop(&good.image, &opts.augment, derive_seed(opts.seed, STREAM_CROP, i))?.0;
            Ok(Family { good, blur, light, crop })
        })
        .collect::<Result<_, _>>()?;

    let mut records = Vec::with_capacity(4 * opts.n_good);
    let mut images = Vec::with_capacity(4 * opts.n_good);
    for (i, (parent, fam)) in split.records.iter().zip(&families).enumerate() {
        let variants = [
            (format!("images/{i:04}_blur.png"), Labels::BLURRY, &fam.blur),
            (format!("images/{i:04}_light.png"), Labels::POOR_LIGHTING, &fam.light),
            (format!("images/{i:04}_crop.png"), Labels::POOR_ZOOM_CROP, &fam.crop),
        ];
        records.push(parent.clone());
        images.push((parent.path.clone(), fam.good.image.clone()));
        for (path, labels, img) in variants {
            records.push(parent.derived(path.clone(), labels));
            images.push((path, img.clone()));
        }
    }
    let manifest = Manifest::new(records);
    manifest.validate()?;

    let skin_pixels = sample_training_skin(&split, &families, opts);
    Ok(SyntheticCorpus { manifest, images, skin_pixels })
}

/// Skin pixels from the ground-truth regions of training originals and of
/// their relit copies, which keep the original geometry.
fn sample_training_skin(split: &Manifest, families: &[Family], opts: &CorpusOptions) -> Vec<[u8; 3]> {
    let train: Vec<usize> = split
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == super::Split::Train)
        .map(|(i, _)| i)
        .collect();
    let sources = 2 * train.len();
    let per_source = opts.skin_pixels.div_ceil(sources.max(1));
    let mut out = Vec::with_capacity(per_source * sources);
    for &i in &train {
        let fam = &families[i];
        let skin_idx: Vec<usize> = (0..fam.good.skin.len()).filter(|&p| fam.good.skin[p]).collect();
        if skin_idx.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_PIXELS, i as u64));
        for img in [&fam.good.image, &fam.light] {
            for _ in 0..per_source {
                out.push(img.pixel_at(skin_idx[rng.random_range(0..skin_idx.len())]));
            }
        }
    }
    out.truncate(opts.skin_pixels);
    out
}

impl SyntheticCorpus {
    /// Writes `manifest.jsonl`, `skin_pixels.csv` and the PNGs under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir.join("images"))?;
        self.images.par_iter().try_for_each(|(path, img)| std::fs::write(dir.join(path), img.encode_png()))?;
        self.manifest.save(&dir.join("manifest.jsonl"))?;
        std::fs::write(dir.join("skin_pixels.csv"), write_skin_pixels_csv(&self.skin_pixels))?;
        Ok(())
    }

    pub fn image(&self, path: &str) -> Option<&Image> {
        self.images.iter().find(|(p, _)| p == path).map(|(_, img)| img)
    }
}
