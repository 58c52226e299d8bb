use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use trueimage_core::classify::StageTimings;
use trueimage_core::data::render_good_image;
use trueimage_core::seed::derive_seed;
use trueimage_core::stats::{mean, quantile_sorted, sort_values};

use super::{emit_json, load_bundle, required_path};
use crate::config::{Config, MIN_BENCH_IMAGES};
use crate::error::CliError;
use crate::BundleArg;

const STREAM_BENCH: u64 = 0x4245_4e43;

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    bundle: BundleArg,
    /// Encoded photos to time; synthetic photos are rendered when empty.
    images: Vec<PathBuf>,
    /// Synthetic photo count [config: bench.images].
    #[arg(long)]
    count: Option<usize>,
    /// Synthetic photo width [config: bench.width].
    #[arg(long)]
    width: Option<usize>,
    /// Synthetic photo height [config: bench.height].
    #[arg(long)]
    height: Option<usize>,
    /// Passes over the image set [config: bench.repeats].
    #[arg(long)]
    repeats: Option<usize>,
    /// Worker threads for the pipeline [config: bench.threads].
    #[arg(long)]
    threads: Option<usize>,
    /// Report path; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    fn of(mut values: Vec<f64>) -> Self {
        sort_values(&mut values);
        Self {
            mean: mean(&values),
            median: quantile_sorted(&values, 0.5),
            p95: quantile_sorted(&values, 0.95),
            min: values[0],
            max: values[values.len() - 1],
        }
    }
}

#[derive(Debug, Serialize)]
struct BenchReport {
    model_version: String,
    source: &'static str,
    images: usize,
    repeats: usize,
    threads: usize,
    /// Milliseconds per image, over every image of every repeat.
    stages_ms: BTreeMap<&'static str, Summary>,
    end_to_end_ms: Summary,
    stage_sum_mean_ms: f64,
    /// Mean end-to-end time of each repeat, and their spread.
    repeat_means_ms: Vec<f64>,
    repeat_std_ms: f64,
}

pub fn run(config: &Config, args: BenchArgs) -> Result<(), CliError> {
    let bundle_path = required_path(args.bundle.bundle, &config.paths.bundle, "BUNDLE_NOT_FOUND", "bundle")?;
    let loaded = load_bundle(&bundle_path)?;
    let settings = &config.bench;
    let repeats = args.repeats.unwrap_or(settings.repeats).max(1);
    let threads = args.threads.unwrap_or(settings.threads).max(1);

    let (source, inputs): (&'static str, Vec<Vec<u8>>) = if args.images.is_empty() {
        let (w, h) = (args.width.unwrap_or(settings.width), args.height.unwrap_or(settings.height));
        let count = args.count.unwrap_or(settings.images);
        let rendered = (0..count as u64)
            .map(|i| render_good_image(w, h, derive_seed(settings.seed, STREAM_BENCH, i)).image.encode_png())
            .collect();
        ("synthetic", rendered)
    } else {
        let read = args
            .images
            .iter()
            .map(|p| std::fs::read(p).map_err(|e| CliError::new("IMAGE_NOT_FOUND", format!("{}: {e}", p.display()))))
            .collect::<Result<_, _>>()?;
        ("files", read)
    };
    if inputs.len() < MIN_BENCH_IMAGES {
        return Err(CliError::new(
            "INSUFFICIENT_IMAGES",
            format!("{} images given, at least {MIN_BENCH_IMAGES} required", inputs.len()),
        ));
    }

    let bundle = &loaded.bundle;
    let profile = bundle.profile(config.profile.as_deref())?;
    let seed = config.seed.unwrap_or(bundle.config.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::new("BENCH_FAILED", e.to_string()))?;
    let runs: Vec<Vec<StageTimings>> = pool.install(|| {
        (0..repeats)
            .map(|_| {
                inputs
                    .iter()
                    .map(|bytes| bundle.assess_bytes(bytes, profile, seed).map(|(_, a)| a.report.timings_ms))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()
    })?;

    let all: Vec<&StageTimings> = runs.iter().flatten().collect();
    let stage = |f: fn(&StageTimings) -> f64| Summary::of(all.iter().map(|t| f(t)).collect());
    let stages_ms = BTreeMap::from([
        ("decode", stage(|t| t.decode)),
        ("segmentation", stage(|t| t.segmentation)),
        ("patches", stage(|t| t.patches)),
        ("lesion", stage(|t| t.lesion)),
        ("features", stage(|t| t.features)),
        ("classify", stage(|t| t.classify)),
    ]);
    let repeat_means_ms: Vec<f64> = runs.iter().map(|r| mean(&r.iter().map(|t| t.total).collect::<Vec<_>>())).collect();
    let m = mean(&repeat_means_ms);
    let repeat_std_ms = if repeats > 1 {
        (repeat_means_ms.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
    } else {
        0.0
    };
    emit_json(
        &BenchReport {
            model_version: loaded.model_version.clone(),
            source,
            images: inputs.len(),
            repeats,
            threads,
            stage_sum_mean_ms: stages_ms.values().map(|s| s.mean).sum(),
            stages_ms,
            end_to_end_ms: stage(|t| t.total),
            repeat_means_ms,
            repeat_std_ms,
        },
        args.out.as_deref(),
    )
}
