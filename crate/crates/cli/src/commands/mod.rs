pub mod assess;
pub mod augment;
pub mod bench;
pub mod corpus;
pub mod eval;
pub mod serve;
pub mod train;

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use trueimage_core::data::{DatasetRecord, Manifest, Split};
use trueimage_core::imaging::{decode_for_assessment, Image};
use trueimage_core::LoadedBundleF64;

use crate::error::CliError;

/// Flag value, else config value, else a `code` error naming `what`.
pub fn required_path(
    flag: Option<PathBuf>,
    config: &Option<PathBuf>,
    code: &'static str,
    what: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::new(code, format!("no {what} given (flag or config)")))
}

pub fn load_bundle(path: &Path) -> Result<LoadedBundleF64, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::new("BUNDLE_NOT_FOUND", format!("{}: {e}", path.display())))?;
    Ok(LoadedBundleF64::from_bytes(&bytes)?)
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    if !path.is_file() {
        return Err(CliError::new("MANIFEST_NOT_FOUND", format!("{} does not exist", path.display())));
    }
    Ok(Manifest::load(path)?)
}

/// Record paths are relative to the manifest's directory unless absolute.
pub fn manifest_dir(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn read_image(path: &Path) -> Result<Image, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::new("IMAGE_NOT_FOUND", format!("{}: {e}", path.display())))?;
    decode_for_assessment(&bytes).map_err(|e| CliError::new("MALFORMED_IMAGE", format!("{}: {e}", path.display())))
}

/// Decodes the images of the records in `split`, in manifest order.
pub fn load_split(manifest: &Manifest, root: &Path, split: Split) -> Result<Vec<(DatasetRecord, Image)>, CliError> {
    let records: Vec<&DatasetRecord> = manifest.in_split(split).collect();
    records
        .par_iter()
        .map(|r| Ok(((*r).clone(), read_image(&root.join(&r.path))?)))
        .collect()
}

pub fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    create_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline, to `out` or stdout.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::new("IO_ERROR", format!("stdout: {e}"))),
    }
}
