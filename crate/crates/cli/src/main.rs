mod commands;
mod config;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::CliError;

/// Dermatology photo quality assessment: train models, assess photos,
/// evaluate, augment datasets, benchmark and serve.
#[derive(Debug, Parser)]
#[command(name = "trueimage", version)]
struct Cli {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the skin model, feature reducer and four classifiers; write a bundle.
    Train(commands::train::TrainArgs),
    /// Assess photos and print one JSON line per image, in input order.
    Assess(commands::assess::AssessArgs),
    /// ROC curves, bootstrap bands and profile operating points on a split.
    Eval(commands::eval::EvalArgs),
    /// Split a manifest of originals and add blurred, relit and cropped copies.
    Augment(commands::augment::AugmentArgs),
    /// Render a synthetic corpus with manifest and skin-pixel CSV.
    GenCorpus(commands::corpus::GenCorpusArgs),
    /// Per-stage latency statistics of the assessment pipeline.
    Bench(commands::bench::BenchArgs),
    /// Run the HTTP service.
    Serve(commands::serve::ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BundleArg {
    /// Model bundle JSON [config: paths.bundle].
    #[arg(long, short)]
    pub bundle: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => commands::train::run(&config, a),
        Command::Assess(a) => commands::assess::run(&config, a),
        Command::Eval(a) => commands::eval::run(&config, a),
        Command::Augment(a) => commands::augment::run(&config, a),
        Command::GenCorpus(a) => commands::corpus::run(&config, a),
        Command::Bench(a) => commands::bench::run(&config, a),
        Command::Serve(a) => commands::serve::run(&config, a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("TRUEIMAGE_LOG").unwrap_or_else(|_| "warn".into()))
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
