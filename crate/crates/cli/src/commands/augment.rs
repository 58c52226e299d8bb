use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use trueimage_core::data::{
    augment_blur, augment_crop, augment_dark, augment_glare, split_dataset, DatasetRecord, Labels, Manifest, Split,
};
use trueimage_core::imaging::Image;
use trueimage_core::seed::derive_seed;

use super::corpus::{write_meta, ManifestMeta, SplitSummary, META_SCHEMA_VERSION};
use super::{emit_json, load_manifest, manifest_dir, read_image, write_file};
use crate::config::Config;
use crate::error::CliError;

const STREAM_BLUR: u64 = 2;
const STREAM_LIGHT: u64 = 3;
const STREAM_CROP: u64 = 4;

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Manifest of original photos, unsplit or already split
    /// [config: paths.manifest].
    #[arg(long, short)]
    manifest: Option<PathBuf>,
    /// Output manifest [default: manifest.augmented.jsonl beside the input].
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Split and augmentation seed [config: corpus.seed].
    #[arg(long)]
    seed: Option<u64>,
}

/// Blurred, relit (dark for even indices, glare for odd) and cropped copies
/// of every good original. Copies inherit the parent's split.
pub fn run(config: &Config, args: AugmentArgs) -> Result<(), CliError> {
    let in_path = super::required_path(args.manifest, &config.paths.manifest, "MANIFEST_NOT_FOUND", "manifest")?;
    let seed = args.seed.unwrap_or(config.corpus.seed);
    let aug = &config.corpus.augment;
    let manifest = load_manifest(&in_path)?;
    manifest.validate()?;
    if manifest.records.iter().any(|r| r.parent.is_some()) {
        return Err(CliError::new("MANIFEST_ALREADY_AUGMENTED", "input manifest already contains augmented records"));
    }
    let unassigned = manifest.records.iter().filter(|r| r.split == Split::Unassigned).count();
    let split = match unassigned {
        0 => manifest,
        n if n == manifest.records.len() => split_dataset(&manifest, config.corpus.ratios, seed)?,
        _ => return Err(CliError::new("MANIFEST_INVALID", "manifest mixes split and unassigned records")),
    };

    let root = manifest_dir(&in_path);
    let out_path = args.out.unwrap_or_else(|| in_path.with_file_name("manifest.augmented.jsonl"));
    let out_root = manifest_dir(&out_path);

    let families: Vec<Vec<(DatasetRecord, Option<Image>)>> = split
        .records
        .par_iter()
        .enumerate()
        .map(|(i, parent)| -> Result<_, CliError> {
            let mut family = vec![(rebase(parent, &root, &out_root), None)];
            if !parent.good {
                return Ok(family);
            }
            let img = read_image(&root.join(&parent.path))?;
            let i64 = i as u64;
            let light_seed = derive_seed(seed, STREAM_LIGHT, i64);
            let light = if i % 2 == 0 { augment_dark(&img, aug, light_seed).0 } else { augment_glare(&img, aug, light_seed).0 };
            let crop = augment_crop(&img, aug, derive_seed(seed, STREAM_CROP, i64))?.0;
            let blur = augment_blur(&img, aug, derive_seed(seed, STREAM_BLUR, i64)).0;
            let stem = Path::new(&parent.path)
                .file_stem()
                .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
            let rebased = &family[0].0.clone();
            for (suffix, labels, copy) in [
                ("blur", Labels::BLURRY, blur),
                ("light", Labels::POOR_LIGHTING, light),
                ("crop", Labels::POOR_ZOOM_CROP, crop),
            ] {
                let path = format!("augmented/{i:04}_{stem}_{suffix}.png");
                family.push((rebased.derived(path, labels), Some(copy)));
            }
            Ok(family)
        })
        .collect::<Result<_, _>>()?;

    families
        .par_iter()
        .flatten()
        .try_for_each(|(record, img)| match img {
            Some(img) => write_file(&out_root.join(&record.path), &img.encode_png()),
            None => Ok(()),
        })?;
    let records: Vec<DatasetRecord> = families.into_iter().flatten().map(|(r, _)| r).collect();
    let out_manifest = Manifest::new(records);
    out_manifest.validate()?;
    out_manifest.check_leakage()?;
    write_file(&out_path, out_manifest.to_jsonl_string().as_bytes())?;
    write_meta(
        &out_path,
        &ManifestMeta {
            schema_version: META_SCHEMA_VERSION,
            command: "augment",
            split_seed: seed,
            ratios: config.corpus.ratios,
            originals: split.records.len(),
            records: out_manifest.records.len(),
            augment: aug,
            corpus: None,
        },
    )?;
    emit_json(&SplitSummary::of(&out_manifest, &out_path), None)
}

/// Re-expresses a relative record path against the output manifest's
/// directory when it differs from the input's.
fn rebase(record: &DatasetRecord, from: &Path, to: &Path) -> DatasetRecord {
    let p = Path::new(&record.path);
    if p.is_absolute() || from == to {
        return record.clone();
    }
    let abs = from.join(p);
    let path = std::path::absolute(&abs).unwrap_or(abs);
    DatasetRecord { path: path.display().to_string(), ..record.clone() }
}
