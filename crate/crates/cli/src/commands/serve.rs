use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Args;
use trueimage_service::{serve, AppState, ServiceConfig};

use crate::config::Config;
use crate::error::CliError;
use crate::BundleArg;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Without a bundle the service answers 503 until restarted with one.
    #[command(flatten)]
    bundle: BundleArg,
    /// Listen address [config: serve.addr].
    #[arg(long)]
    addr: Option<SocketAddr>,
    /// Directory of static web-client files [config: serve.static_dir].
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Upload size cap in bytes [config: serve.max_body_bytes].
    #[arg(long)]
    max_body_bytes: Option<usize>,
    /// Concurrent assessments before 429 [config: serve.max_concurrent].
    #[arg(long)]
    max_concurrent: Option<usize>,
    /// Patch-sampling seed [config: seed; default: the bundle's].
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(config: &Config, args: ServeArgs) -> Result<(), CliError> {
    let s = &config.serve;
    let defaults = ServiceConfig::default();
    let service = ServiceConfig {
        max_body_bytes: args.max_body_bytes.unwrap_or(s.max_body_bytes),
        max_concurrent: args.max_concurrent.or(s.max_concurrent).unwrap_or(defaults.max_concurrent),
        seed: args.seed.or(config.seed),
        static_dir: args.static_dir.or_else(|| s.static_dir.clone()),
    };
    let bundle = args.bundle.bundle.or_else(|| config.paths.bundle.clone());
    if bundle.is_none() {
        tracing::warn!("no bundle configured; assessment endpoints will return 503");
    }
    let state = AppState::load(bundle.as_deref(), service).map_err(|e| CliError::new("BUNDLE_NOT_FOUND", e.to_string()))?;
    let addr = args.addr.unwrap_or(s.addr);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new("SERVE_FAILED", e.to_string()))?;
    runtime
        .block_on(serve(addr, state))
        .map_err(|e| CliError::new("SERVE_FAILED", e.to_string()))
}
