use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use trueimage_core::data::Split;
use trueimage_core::training::{evaluate_bundle, EvaluationReport, LabeledImage};

use super::{emit_json, load_bundle, load_manifest, load_split, manifest_dir, required_path, write_file};
use crate::config::Config;
use crate::error::CliError;
use crate::BundleArg;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    bundle: BundleArg,
    /// Split manifest [config: paths.manifest].
    #[arg(long, short)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Bootstrap resamples [config: eval.n_resamples].
    #[arg(long)]
    n_resamples: Option<usize>,
    /// Bootstrap seed [config: eval.seed].
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write one ROC plot per head (roc_<head>.svg) into this directory
    /// [default: paths.output_dir when set].
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    model_version: &'a str,
    split: Split,
    #[serde(flatten)]
    report: &'a EvaluationReport,
}

pub fn run(config: &Config, args: EvalArgs) -> Result<(), CliError> {
    let bundle_path = required_path(args.bundle.bundle, &config.paths.bundle, "BUNDLE_NOT_FOUND", "bundle")?;
    let manifest_path = required_path(args.manifest, &config.paths.manifest, "MANIFEST_NOT_FOUND", "manifest")?;
    let n_resamples = args.n_resamples.unwrap_or(config.eval.n_resamples);
    if n_resamples < trueimage_core::eval::MIN_RESAMPLES {
        return Err(CliError::invalid_config(format!(
            "n_resamples must be at least {}",
            trueimage_core::eval::MIN_RESAMPLES
        )));
    }
    let seed = args.seed.unwrap_or(config.eval.seed);
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };

    let loaded = load_bundle(&bundle_path)?;
    let manifest = load_manifest(&manifest_path)?;
    let images = load_split(&manifest, &manifest_dir(&manifest_path), split)?;
    if images.is_empty() {
        return Err(CliError::new("EMPTY_SPLIT", format!("manifest has no {split:?} records")));
    }
    let labeled: Vec<LabeledImage<'_>> =
        images.iter().map(|(r, image)| LabeledImage { image, labels: r.labels() }).collect();
    let report = evaluate_bundle(&loaded.bundle, &labeled, n_resamples, seed)?;

    if let Some(dir) = args.plots.or_else(|| config.paths.output_dir.clone()) {
        for head in &report.heads {
            if let Some(svg) = crate::plot::roc_svg(head) {
                write_file(&dir.join(format!("roc_{}.svg", head.head.as_str())), svg.as_bytes())?;
            }
        }
    }
    emit_json(
        &EvalOutput { model_version: &loaded.model_version, split, report: &report },
        args.out.as_deref(),
    )
}
