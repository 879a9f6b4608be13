//! Pipeline CLI: staged subcommands over a structured config file.
//!
//! Stages are idempotent: re-running with unchanged inputs and config
//! produces byte-identical outputs, and every stage writes a provenance
//! document carrying the resolved config hash plus input/output digests.
//! Exit codes: 0 success, 2 invalid config, 3 missing input, 4 schema
//! version mismatch, 1 any other failure.

mod stages;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use tagrisk_core::artifact::ArtifactError;
use tagrisk_core::config::{ConfigError, PipelineConfig};

#[derive(Parser)]
#[command(name = "tagrisk", version, about = "Tag-based credibility-risk scoring pipeline")]
struct Cli {
    /// Pipeline config file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for stage artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load raw messages, normalize, drop low-information posts.
    Ingest,
    /// Remove forwarded duplicates and cluster near-duplicates.
    Dedup,
    /// Extract, resolve, and canonicalize URLs; emit masked text.
    Urls,
    /// Derive message supervision from the rating dump.
    Supervise,
    /// Obtain tag assignments (http, file, or mock mode).
    Tag,
    /// Build feature matrices from tags (and validate embeddings).
    Featurize,
    /// Train one model on a single split; score the whole window.
    Train,
    /// Repeated-seed evaluation across configured representations.
    Evaluate,
    /// Tag-field ablations.
    Ablate,
    /// Tagger-noise stress test.
    Stress,
    /// Risk-weighted monitoring analytics over scored messages.
    Monitor,
    /// Gather stage outputs into one report.
    Report,
    /// Generate a synthetic corpus and run every stage end to end.
    Demo {
        /// Messages to generate.
        #[arg(long, default_value_t = 6000)]
        messages: usize,
        /// Weeks to spread them over.
        #[arg(long, default_value_t = 10)]
        weeks: usize,
    },
}

fn exit_code_for(error: &anyhow::Error) -> u8 {
    if let Some(config_error) = error.downcast_ref::<ConfigError>() {
        return match config_error {
            ConfigError::Unreadable(_) => 3,
            _ => 2,
        };
    }
    if let Some(artifact_error) = error.downcast_ref::<ArtifactError>() {
        return match artifact_error {
            ArtifactError::MissingInput(_) => 3,
            ArtifactError::SchemaVersionMismatch { .. } => 4,
            _ => 1,
        };
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        // Ignore the error if a pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let result = run(cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;

    let ctx = stages::Context::new(config, cli.out_dir)?;
    match cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::Dedup => stages::dedup(&ctx),
        Command::Urls => stages::urls(&ctx),
        Command::Supervise => stages::supervise(&ctx),
        Command::Tag => stages::tag(&ctx),
        Command::Featurize => stages::featurize(&ctx),
        Command::Train => stages::train(&ctx),
        Command::Evaluate => stages::evaluate(&ctx),
        Command::Ablate => stages::ablate(&ctx),
        Command::Stress => stages::stress(&ctx),
        Command::Monitor => stages::monitor(&ctx),
        Command::Report => stages::report(&ctx),
        Command::Demo { messages, weeks } => stages::demo(ctx, messages, weeks),
    }
}
