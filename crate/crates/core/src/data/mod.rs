//! Dataset manifests, leakage-safe splitting, augmentation and the
//! synthetic corpus.

mod augment;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{
    augment_blur, augment_crop, augment_dark, augment_glare, gaussian_blur, gaussian_kernel, AugmentConfig, BlurParams,
    CropParams, Corner, MIN_CROP_SIDE,
};
pub use synth::{generate_synthetic_corpus, render_good_image, CorpusOptions, RenderedImage, SyntheticCorpus};

use crate::imaging::ImagingError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("manifest not found: {0}")]
    ManifestNotFound(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("records are already split or augmented: {0}")]
    AlreadySplit(String),
    #[error("augmented record {child} is in {child_split:?} but its parent {parent} is in {parent_split:?}")]
    Leakage {
        child: String,
        parent: String,
        child_split: Split,
        parent_split: Split,
    },
    #[error("image too small for augmentation: {0}")]
    ImageTooSmall(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Web,
    WebAugmented,
    Stanford,
    Extra,
    Synthetic,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

/// The four multi-label quality annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Labels {
    pub good: bool,
    pub blurry: bool,
    pub poor_lighting: bool,
    pub poor_zoom_crop: bool,
}

impl Labels {
    pub const GOOD: Labels = Labels { good: true, blurry: false, poor_lighting: false, poor_zoom_crop: false };
    pub const BLURRY: Labels = Labels { good: false, blurry: true, poor_lighting: false, poor_zoom_crop: false };
    pub const POOR_LIGHTING: Labels = Labels { good: false, blurry: false, poor_lighting: true, poor_zoom_crop: false };
    pub const POOR_ZOOM_CROP: Labels = Labels { good: false, blurry: false, poor_lighting: false, poor_zoom_crop: true };

    /// In head order: good, blurry, poor lighting, poor zoom/crop.
    pub fn as_array(&self) -> [bool; 4] {
        [self.good, self.blurry, self.poor_lighting, self.poor_zoom_crop]
    }
}

/// One line of a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub path: String,
    pub good: bool,
    pub blurry: bool,
    pub poor_lighting: bool,
    pub poor_zoom_crop: bool,
    pub source: Source,
    pub split: Split,
    pub parent: Option<String>,
    #[serde(default)]
    pub human_reviewed: bool,
}

impl DatasetRecord {
    pub fn new(path: impl Into<String>, labels: Labels, source: Source) -> Self {
        Self {
            path: path.into(),
            good: labels.good,
            blurry: labels.blurry,
            poor_lighting: labels.poor_lighting,
            poor_zoom_crop: labels.poor_zoom_crop,
            source,
            split: Split::Unassigned,
            parent: None,
            human_reviewed: false,
        }
    }

    pub fn labels(&self) -> Labels {
        Labels {
            good: self.good,
            blurry: self.blurry,
            poor_lighting: self.poor_lighting,
            poor_zoom_crop: self.poor_zoom_crop,
        }
    }

    /// Record for an augmented copy; inherits the parent's split.
    pub fn derived(&self, path: impl Into<String>, labels: Labels) -> Self {
        Self {
            parent: Some(self.path.clone()),
            split: self.split,
            human_reviewed: false,
            ..Self::new(path, labels, self.source)
        }
    }
}

/// Train/val/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.6, val: 0.2, test: 0.2 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DataError> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Invalid(format!("split ratios {r:?} must be positive and sum to 1")));
        }
        Ok(())
    }

    /// Floor of each share, then the leftover records go to the largest
    /// fractional parts (earlier split on ties).
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let exact = [self.train * n as f64, self.val * n as f64, self.test * n as f64];
        let mut counts = exact.map(|e| e.floor() as usize);
        let mut left = n.saturating_sub(counts.iter().sum());
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<DatasetRecord>,
}

impl Manifest {
    pub fn new(records: Vec<DatasetRecord>) -> Self {
        Self { records }
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, DataError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| DataError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        let m = Self { records };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let file = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => DataError::ManifestNotFound(path.display().to_string()),
            _ => DataError::Io(e),
        })?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), DataError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_jsonl_string())?;
        Ok(())
    }

    /// Unique paths and no split leakage between parents and children.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.path.as_str()) {
                return Err(DataError::Invalid(format!("duplicate path {}", r.path)));
            }
        }
        self.check_leakage()
    }

    pub fn check_leakage(&self) -> Result<(), DataError> {
        let split_of: HashMap<&str, Split> = self.records.iter().map(|r| (r.path.as_str(), r.split)).collect();
        for r in &self.records {
            if let Some(parent) = &r.parent {
                let parent_split = *split_of
                    .get(parent.as_str())
                    .ok_or_else(|| DataError::Invalid(format!("{} names a missing parent {parent}", r.path)))?;
                if parent_split != r.split {
                    return Err(DataError::Leakage {
                        child: r.path.clone(),
                        parent: parent.clone(),
                        child_split: r.split,
                        parent_split,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn label_counts(&self) -> LabelCounts {
        LabelCounts::of(self.records.iter())
    }

    pub fn counts_by_source(&self) -> BTreeMap<Source, LabelCounts> {
        let mut out: BTreeMap<Source, Vec<&DatasetRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.source).or_default().push(r);
        }
        out.into_iter().map(|(s, rs)| (s, LabelCounts::of(rs.into_iter()))).collect()
    }
}

/// Assigns every original record to a split. Requires unassigned,
/// parent-free records; augment afterwards so children inherit the split.
pub fn split_dataset(manifest: &Manifest, ratios: SplitRatios, seed: u64) -> Result<Manifest, DataError> {
    ratios.validate()?;
    if let Some(r) = manifest.records.iter().find(|r| r.split != Split::Unassigned || r.parent.is_some()) {
        return Err(DataError::AlreadySplit(r.path.clone()));
    }
    let n = manifest.records.len();
    let [n_train, n_val, _] = ratios.counts(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut records = manifest.records.clone();
    for (rank, &idx) in order.iter().enumerate() {
        records[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(Manifest { records })
}

/// Record and per-label totals. Labels overlap, so the label columns can
/// sum to more than `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub total: usize,
    pub good: usize,
    pub blurry: usize,
    pub poor_lighting: usize,
    pub poor_zoom_crop: usize,
}

impl LabelCounts {
    pub fn of<'a>(records: impl Iterator<Item = &'a DatasetRecord>) -> Self {
        let mut c = Self::default();
        for r in records {
            c.total += 1;
            c.good += usize::from(r.good);
            c.blurry += usize::from(r.blurry);
            c.poor_lighting += usize::from(r.poor_lighting);
            c.poor_zoom_crop += usize::from(r.poor_zoom_crop);
        }
        c
    }

    pub fn label_sum(&self) -> usize {
        self.good + self.blurry + self.poor_lighting + self.poor_zoom_crop
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            total: self.total + other.total,
            good: self.good + other.good,
            blurry: self.blurry + other.blurry,
            poor_lighting: self.poor_lighting + other.poor_lighting,
            poor_zoom_crop: self.poor_zoom_crop + other.poor_zoom_crop,
        }
    }
}

/// Per-source image and label counts of the original study corpus.
pub fn reference_corpus_counts() -> Vec<(Source, LabelCounts)> {
    let c = |total, good, blurry, poor_lighting, poor_zoom_crop| LabelCounts {
        total,
        good,
        blurry,
        poor_lighting,
        poor_zoom_crop,
    };
    vec![
        (Source::Web, c(55, 46, 5, 5, 1)),
        (Source::WebAugmented, c(179, 14, 80, 0, 85)),
        (Source::Stanford, c(99, 86, 5, 7, 2)),
        (Source::Extra, c(29, 0, 0, 29, 0)),
    ]
}

/// Placeholder records realizing per-source counts. Images carrying more
/// than one label are the defect labels stacked onto the first records
/// until the label columns fit into `total` rows.
pub fn manifest_from_counts(counts: &[(Source, LabelCounts)]) -> Result<Manifest, DataError> {
    let mut records = Vec::new();
    for (source, c) in counts {
        let overlap = c.label_sum().checked_sub(c.total).ok_or_else(|| {
            DataError::Invalid(format!("{source:?}: {} labels cannot cover {} images", c.label_sum(), c.total))
        })?;
        // One label per row, then fold the surplus defect labels back onto
        // the earliest defect rows.
        let mut rows: Vec<Labels> = Vec::new();
        rows.extend(std::iter::repeat_n(Labels::GOOD, c.good));
        rows.extend(std::iter::repeat_n(Labels::BLURRY, c.blurry));
        rows.extend(std::iter::repeat_n(Labels::POOR_LIGHTING, c.poor_lighting));
        rows.extend(std::iter::repeat_n(Labels::POOR_ZOOM_CROP, c.poor_zoom_crop));
        let mut folded = 0;
        while folded < overlap {
            let extra = rows.pop().ok_or_else(|| DataError::Invalid("overlap exceeds rows".into()))?;
            let target = rows
                .iter_mut()
                .skip(c.good)
                .find(|l| {
                    !(l.blurry && extra.blurry)
                        && !(l.poor_lighting && extra.poor_lighting)
                        && !(l.poor_zoom_crop && extra.poor_zoom_crop)
                })
                .ok_or_else(|| DataError::Invalid(format!("{source:?}: cannot place multi-label rows")))?;
            target.blurry |= extra.blurry;
            target.poor_lighting |= extra.poor_lighting;
            target.poor_zoom_crop |= extra.poor_zoom_crop;
            folded += 1;
        }
        for (i, labels) in rows.into_iter().enumerate() {
            records.push(DatasetRecord::new(format!("{source:?}/{i:04}").to_lowercase(), labels, *source));
        }
    }
    let m = Manifest { records };
    m.validate()?;
    Ok(m)
}
