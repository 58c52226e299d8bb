use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use trueimage_core::data::{generate_synthetic_corpus, AugmentConfig, CorpusOptions, LabelCounts, Manifest, Split, SplitRatios};

use super::{emit_json, write_file};
use crate::config::Config;
use crate::error::CliError;

pub const META_SCHEMA_VERSION: u32 = 1;

/// Sidecar written next to a generated manifest: how it was split and
/// augmented.
#[derive(Debug, Serialize)]
pub struct ManifestMeta<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub split_seed: u64,
    pub ratios: SplitRatios,
    pub originals: usize,
    pub records: usize,
    pub augment: &'a AugmentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<&'a CorpusOptions>,
}

/// `manifest.jsonl` -> `manifest.meta.json`.
pub fn meta_path(manifest: &Path) -> PathBuf {
    let stem = manifest.file_stem().map_or_else(|| "manifest".into(), |s| s.to_string_lossy().into_owned());
    manifest.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_meta(manifest_path: &Path, meta: &ManifestMeta<'_>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(meta).expect("serializable");
    text.push('\n');
    write_file(&meta_path(manifest_path), text.as_bytes())
}

#[derive(Debug, Serialize)]
pub struct SplitSummary {
    pub manifest: String,
    pub records: usize,
    pub train: LabelCounts,
    pub val: LabelCounts,
    pub test: LabelCounts,
}

impl SplitSummary {
    pub fn of(manifest: &Manifest, path: &Path) -> Self {
        Self {
            manifest: path.display().to_string(),
            records: manifest.records.len(),
            train: LabelCounts::of(manifest.in_split(Split::Train)),
            val: LabelCounts::of(manifest.in_split(Split::Val)),
            test: LabelCounts::of(manifest.in_split(Split::Test)),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Output directory [config: paths.output_dir].
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Good originals to render [config: corpus.n_good].
    #[arg(long)]
    n_good: Option<usize>,
    /// Corpus and split seed [config: corpus.seed].
    #[arg(long)]
    seed: Option<u64>,
    /// Nominal image width [config: corpus.width].
    #[arg(long)]
    width: Option<usize>,
    /// Nominal image height [config: corpus.height].
    #[arg(long)]
    height: Option<usize>,
}

pub fn run(config: &Config, args: GenCorpusArgs) -> Result<(), CliError> {
    let out = super::required_path(args.out, &config.paths.output_dir, "INVALID_CONFIG", "output directory")?;
    let mut opts = config.corpus;
    opts.n_good = args.n_good.unwrap_or(opts.n_good);
    opts.seed = args.seed.unwrap_or(opts.seed);
    opts.width = args.width.unwrap_or(opts.width);
    opts.height = args.height.unwrap_or(opts.height);

    let corpus = generate_synthetic_corpus(&opts)?;
    corpus.write_to(&out)?;
    let manifest_path = out.join("manifest.jsonl");
    write_meta(
        &manifest_path,
        &ManifestMeta {
            schema_version: META_SCHEMA_VERSION,
            command: "gen-corpus",
            split_seed: opts.seed,
            ratios: opts.ratios,
            originals: opts.n_good,
            records: corpus.manifest.records.len(),
            augment: &opts.augment,
            corpus: Some(&opts),
        },
    )?;
    emit_json(&SplitSummary::of(&corpus.manifest, &manifest_path), None)
}
