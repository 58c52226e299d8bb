//! Photo-quality assessment for teledermatology: skin segmentation, blur,
//! lighting and framing features, per-defect classifiers and ROC tools.

pub mod classify;
pub mod data;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod segmentation;
pub mod stats;
pub mod training;

pub use scalar::Scalar;

/// Double-precision instantiations used by the CLI and the service.
pub type GmmModelF64 = segmentation::GmmModel<f64>;
pub type PcaModelF64 = features::PcaModel<f64>;
pub type LogisticModelF64 = classify::LogisticModel<f64>;
pub type FeatureVectorF64 = features::FeatureVector<f64>;
pub type Bundle = pipeline::ModelBundle<f64>;
pub type LoadedBundleF64 = pipeline::LoadedBundle<f64>;

/// Single-precision bundle, for memory-constrained deployments.
pub type BundleF32 = pipeline::ModelBundle<f32>;
