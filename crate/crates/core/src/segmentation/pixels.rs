//! Sources of labeled skin pixels for training the skin model.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PixelCsvError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected header `r,g,b`, found `{0}`")]
    Header(String),
}

#[derive(Deserialize)]
struct Row {
    r: u8,
    g: u8,
    b: u8,
}

/// Reads a CSV with header `r,g,b` and one 0..=255 integer triple per row.
pub fn read_skin_pixels_csv(reader: impl Read) -> Result<Vec<[u8; 3]>, PixelCsvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["r", "g", "b"] {
        return Err(PixelCsvError::Header(header.join(",")));
    }
    rdr.deserialize::<Row>()
        .map(|row| row.map(|Row { r, g, b }| [r, g, b]).map_err(PixelCsvError::from))
        .collect()
}

pub fn write_skin_pixels_csv(pixels: &[[u8; 3]]) -> String {
    let mut out = String::from("r,g,b\n");
    for [r, g, b] in pixels {
        out.push_str(&format!("{r},{g},{b}\n"));
    }
    out
}

/// Procedural skin colors spanning light to dark tones under varying
/// illumination. Stands in for a labeled skin-pixel dataset.
#[derive(Debug, Clone)]
pub struct SkinToneSampler {
    /// Base tones ordered from lightest to darkest.
    pub palette: Vec<[f64; 3]>,
    pub illumination: (f64, f64),
    pub channel_noise: f64,
}

impl Default for SkinToneSampler {
    fn default() -> Self {
        Self {
            palette: vec![
                [232.0, 196.0, 175.0],
                [224.0, 180.0, 155.0],
                [210.0, 160.0, 130.0],
                [190.0, 140.0, 110.0],
                [165.0, 115.0, 85.0],
                [140.0, 95.0, 70.0],
                [110.0, 75.0, 55.0],
                [85.0, 58.0, 42.0],
                [65.0, 45.0, 35.0],
            ],
            illumination: (0.55, 1.1),
            channel_noise: 5.0,
        }
    }
}

impl SkinToneSampler {
    /// Base tone at palette position `t` in `[0, 1]`, linearly interpolated.
    pub fn tone_at(&self, t: f64) -> [f64; 3] {
        let last = self.palette.len() - 1;
        let pos = t.clamp(0.0, 1.0) * last as f64;
        let i = (pos.floor() as usize).min(last.saturating_sub(1));
        let f = pos - i as f64;
        let (a, b) = (self.palette[i], self.palette[(i + 1).min(last)]);
        std::array::from_fn(|c| a[c] + f * (b[c] - a[c]))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<[u8; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.channel_noise).expect("valid std");
        (0..n)
            .map(|_| {
                let tone = self.tone_at(rng.random::<f64>());
                let light = rng.random_range(self.illumination.0..=self.illumination.1);
                tone.map(|v| (v * light + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
            })
            .collect()
    }
}
