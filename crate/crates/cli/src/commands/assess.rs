use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};
use trueimage_core::LoadedBundleF64;
use trueimage_service::render_overlay;

use super::{load_bundle, write_file};
use crate::config::Config;
use crate::error::CliError;
use crate::BundleArg;

#[derive(Debug, Args)]
pub struct AssessArgs {
    #[command(flatten)]
    bundle: BundleArg,
    /// Image files to assess.
    images: Vec<PathBuf>,
    /// Assess every file in this directory, sorted by name.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Threshold profile [config: profile; default: the bundle's].
    #[arg(long, short)]
    profile: Option<String>,
    /// Patch-sampling seed [config: seed; default: the bundle's].
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON lines here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write a segmentation overlay PNG per image into this directory.
    #[arg(long)]
    overlay_dir: Option<PathBuf>,
}

pub fn run(config: &Config, args: AssessArgs) -> Result<(), CliError> {
    let bundle_path = super::required_path(args.bundle.bundle, &config.paths.bundle, "BUNDLE_NOT_FOUND", "bundle")?;
    let loaded = load_bundle(&bundle_path)?;
    let profile_name = args.profile.or_else(|| config.profile.clone());
    let profile = loaded.bundle.profile(profile_name.as_deref())?.clone();
    let seed = args.seed.or(config.seed).unwrap_or(loaded.bundle.config.seed);

    let mut inputs = args.images;
    if let Some(dir) = &args.batch {
        inputs.extend(list_dir(dir)?);
    }
    if inputs.is_empty() {
        return Err(CliError::new("NO_INPUT", "no images given"));
    }
    if let Some(dir) = &args.overlay_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }

    let lines: Vec<Value> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, path)| assess_one(&loaded, &profile, seed, path, i, args.overlay_dir.as_deref()))
        .collect();

    let mut text = String::new();
    for line in &lines {
        text.push_str(&serde_json::to_string(line).expect("serializable"));
        text.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::new("IO_ERROR", format!("stdout: {e}"))),
    }
}

/// Regular files directly inside `dir`, sorted by file name.
fn list_dir(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::new("INPUT_NOT_FOUND", format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Report with a `path` field, or `{"path", "error": {code, message}}`.
fn assess_one(
    loaded: &LoadedBundleF64,
    profile: &trueimage_core::classify::ThresholdProfile,
    seed: u64,
    path: &Path,
    index: usize,
    overlay_dir: Option<&Path>,
) -> Value {
    let shown = path.display().to_string();
    let error = |code: &str, message: String| json!({ "path": shown, "error": { "code": code, "message": message } });
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return error("IMAGE_NOT_FOUND", e.to_string()),
    };
    let (img, assessment) = match loaded.bundle.assess_bytes(&bytes, profile, seed) {
        Ok(r) => r,
        Err(e) => return error(e.code(), e.to_string()),
    };
    if let Some(dir) = overlay_dir {
        let lesion = assessment.extraction.lesion.as_ref().map(|m| m.labels.as_slice());
        let overlay = render_overlay(&img, &assessment.extraction.skin.labels, lesion);
        let stem = path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
        let out = dir.join(format!("{index:04}_{stem}_overlay.png"));
        if let Err(e) = std::fs::write(&out, overlay.encode_png()) {
            return error("IO_ERROR", format!("{}: {e}", out.display()));
        }
    }
    let mut value = serde_json::to_value(&assessment.report).expect("serializable");
    value.as_object_mut().expect("report is an object").insert("path".into(), json!(shown));
    value
}
