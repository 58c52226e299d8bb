use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use trueimage_core::data::{generate_synthetic_corpus, DatasetRecord, Split};
use trueimage_core::imaging::Image;
use trueimage_core::pipeline::bundle_hash;
use trueimage_core::segmentation::pixels::read_skin_pixels_csv;
use trueimage_core::training::{train_bundle, LabeledImage, TrainReport};
use trueimage_core::Bundle;

use super::{emit_json, load_manifest, load_split, manifest_dir, write_file};
use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Split manifest (JSON lines) [config: paths.manifest].
    #[arg(long, short)]
    manifest: Option<PathBuf>,
    /// Skin-pixel CSV with header r,g,b [config: paths.skin_pixels;
    /// default: skin_pixels.csv beside the manifest].
    #[arg(long)]
    skin_pixels: Option<PathBuf>,
    /// Train on an in-memory synthetic corpus built from the [corpus] config
    /// instead of a manifest.
    #[arg(long, conflicts_with_all = ["manifest", "skin_pixels"])]
    synthetic: bool,
    /// Where to write the bundle [config: paths.bundle; default model.json].
    #[arg(long, short)]
    bundle: Option<PathBuf>,
    /// Training report path; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    model_version: String,
    #[serde(flatten)]
    report: &'a TrainReport,
}

pub fn run(config: &Config, args: TrainArgs) -> Result<(), CliError> {
    let out = args.bundle.or_else(|| config.paths.bundle.clone()).unwrap_or_else(|| "model.json".into());
    let (bundle, report) = if args.synthetic {
        let corpus = generate_synthetic_corpus(&config.corpus)?;
        let pick = |split: Split| -> Vec<LabeledImage<'_>> {
            corpus
                .manifest
                .records
                .iter()
                .zip(&corpus.images)
                .filter(|(r, _)| r.split == split)
                .map(|(r, (_, image))| LabeledImage { image, labels: r.labels() })
                .collect()
        };
        train_bundle::<f64>(&corpus.skin_pixels, &pick(Split::Train), &pick(Split::Val), &config.train)?
    } else {
        let manifest_path = super::required_path(args.manifest, &config.paths.manifest, "MANIFEST_NOT_FOUND", "manifest")?;
        let manifest = load_manifest(&manifest_path)?;
        manifest.validate()?;
        manifest.check_leakage()?;
        let root = manifest_dir(&manifest_path);
        let csv_path = args
            .skin_pixels
            .or_else(|| config.paths.skin_pixels.clone())
            .unwrap_or_else(|| root.join("skin_pixels.csv"));
        let file = std::fs::File::open(&csv_path)
            .map_err(|e| CliError::new("SKIN_PIXELS_NOT_FOUND", format!("{}: {e}", csv_path.display())))?;
        let pixels = read_skin_pixels_csv(file)
            .map_err(|e| CliError::new("SKIN_PIXELS_INVALID", format!("{}: {e}", csv_path.display())))?;
        let train = load_split(&manifest, &root, Split::Train)?;
        let val = load_split(&manifest, &root, Split::Val)?;
        train_bundle::<f64>(&pixels, &labeled(&train), &labeled(&val), &config.train)?
    };
    let bundle: Bundle = bundle;
    let bytes = bundle.to_json_bytes();
    write_file(&out, &bytes)?;
    emit_json(&TrainOutput { model_version: bundle_hash(&bytes), report: &report }, args.report.as_deref())
}

fn labeled(v: &[(DatasetRecord, Image)]) -> Vec<LabeledImage<'_>> {
    v.iter().map(|(r, image)| LabeledImage { image, labels: r.labels() }).collect()
}
