//! TOML run configuration. Every section is optional; unknown keys are
//! rejected. Command-line flags override the values read here.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trueimage_core::data::CorpusOptions;
use trueimage_core::eval::MIN_RESAMPLES;
use trueimage_core::training::TrainOptions;
use trueimage_service::DEFAULT_MAX_BODY_BYTES;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    /// Threshold profile for `assess`; the bundle default when unset.
    pub profile: Option<String>,
    /// Patch-sampling seed for `assess` and `bench`; the bundle's when unset.
    pub seed: Option<u64>,
    pub train: TrainOptions,
    /// Synthetic corpus, split ratios and augmentation ranges. `augment`
    /// reads its ratios and ranges from here as well.
    pub corpus: CorpusOptions,
    pub eval: EvalSettings,
    pub bench: BenchSettings,
    pub serve: ServeSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub bundle: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    /// `r,g,b` CSV; defaults to `skin_pixels.csv` beside the manifest.
    pub skin_pixels: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { n_resamples: 1000, seed: 0 }
    }
}

pub const MIN_BENCH_IMAGES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Synthetic photos rendered when no image paths are given.
    pub images: usize,
    pub width: usize,
    pub height: usize,
    pub repeats: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { images: MIN_BENCH_IMAGES, width: 1280, height: 1024, repeats: 3, threads: 1, seed: 2024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub addr: SocketAddr,
    pub max_body_bytes: usize,
    /// Defaults to the number of available cores.
    pub max_concurrent: Option<usize>,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            max_concurrent: None,
            static_dir: None,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("CONFIG_NOT_FOUND", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::invalid_config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.corpus.augment.validate().map_err(|e| CliError::invalid_config(e.to_string()))?;
        self.corpus.ratios.validate().map_err(|e| CliError::invalid_config(e.to_string()))?;
        let t = &self.train;
        if !(t.recall_target > 0.0 && t.recall_target < 1.0) {
            return Err(CliError::invalid_config("train.recall_target must lie in (0, 1)"));
        }
        if !(t.holdout_fraction > 0.0 && t.holdout_fraction < 1.0) {
            return Err(CliError::invalid_config("train.holdout_fraction must lie in (0, 1)"));
        }
        for (name, v) in [("lenient_min_tpr", t.lenient_min_tpr), ("strict_min_tpr", t.strict_min_tpr)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CliError::invalid_config(format!("train.{name} must lie in (0, 1]")));
            }
        }
        if t.logistic.l2 < 0.0 {
            return Err(CliError::invalid_config("train.logistic.l2 must be non-negative"));
        }
        let b = &t.pipeline.border_margin;
        if !(0.0..0.5).contains(b) {
            return Err(CliError::invalid_config("train.pipeline.border_margin must lie in [0, 0.5)"));
        }
        if self.eval.n_resamples < MIN_RESAMPLES {
            return Err(CliError::invalid_config(format!("eval.n_resamples must be at least {MIN_RESAMPLES}")));
        }
        if self.bench.images < MIN_BENCH_IMAGES {
            return Err(CliError::invalid_config(format!("bench.images must be at least {MIN_BENCH_IMAGES}")));
        }
        if self.bench.repeats == 0 || self.bench.threads == 0 {
            return Err(CliError::invalid_config("bench.repeats and bench.threads must be positive"));
        }
        if self.serve.max_body_bytes == 0 {
            return Err(CliError::invalid_config("serve.max_body_bytes must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn nested_sections_merge_with_defaults() {
        let c = Config::parse(
            "profile = \"strict\"\n[paths]\nbundle = \"m.json\"\n[train.logistic]\nl2 = 0.5\n[corpus]\nn_good = 30\n",
        )
        .unwrap();
        assert_eq!(c.profile.as_deref(), Some("strict"));
        assert_eq!(c.paths.bundle, Some(PathBuf::from("m.json")));
        assert_eq!(c.train.logistic.l2, 0.5);
        assert_eq!(c.train.logistic.max_iters, TrainOptions::default().logistic.max_iters);
        assert_eq!(c.corpus.n_good, 30);
        assert_eq!(c.corpus.seed, CorpusOptions::default().seed);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["colour = 1", "[paths]\nmodel = \"x\"", "[train.pipeline]\nborder = 0.1", "[bench]\nruns = 2"] {
            let err = Config::parse(text).unwrap_err();
            assert_eq!(err.code, "INVALID_CONFIG", "{text}");
        }
    }

    #[test]
    fn out_of_range_knobs_are_rejected() {
        for text in [
            "[train]\nrecall_target = 1.5",
            "[eval]\nn_resamples = 10",
            "[bench]\nimages = 5",
            "[corpus.augment]\nblur_kernel = [4, 9]",
            "[train.pipeline]\nborder_margin = 0.7",
        ] {
            assert_eq!(Config::parse(text).unwrap_err().code, "INVALID_CONFIG", "{text}");
        }
    }
}
