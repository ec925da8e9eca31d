//! `dallm`: reproducible commands over the augmentation pipeline.
//!
//! Every command reads one TOML config (see [`config::PipelineConfig`]),
//! writes fixed-name artifacts under the output directory, and records a
//! manifest with the config hash and the sha256 of every input and output.
//!
//! Exit codes: 0 success, 1 other failure, 2 config or usage error,
//! 3 missing upstream artifact, 4 backend failure, 5 failure rate exceeded.

pub mod commands;
pub mod config;
pub mod context;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dallm_core::dataset::Lesion;
use dallm_core::ingest::{Scope, SourceKind};
use dallm_core::llm::CacheMode;

use crate::config::{Overrides, Settings};
use crate::context::Context;
use crate::error::{CliError, EXIT_CONFIG, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "dallm", version, about = "Context-aware clinical tabular data augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Omit the expert-knowledge block from value-generation prompts.
    #[arg(long, global = true)]
    pub ablation: bool,
    /// Ingest from the fixture corpus only.
    #[arg(long, global = true)]
    pub offline: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// live | record | strict-replay
    #[arg(long, global = true)]
    pub cache_mode: Option<CacheMode>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Replay cache directory; defaults to `<output-dir>/cache/llm`.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads for fetching, embedding, prompting and training.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Comma-separated: wikipedia, radiopaedia, fixture.
    #[arg(long, global = true, value_delimiter = ',')]
    pub sources: Option<Vec<SourceKind>>,
    /// top_one | first_page
    #[arg(long, global = true)]
    pub scope: Option<Scope>,
    #[arg(long, global = true)]
    pub corpus_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch or load documents for each lesion into `corpus/`.
    Ingest,
    /// Chunk and embed the corpus into `index.json`, or query it.
    Index {
        #[command(subcommand)]
        action: Option<IndexAction>,
    },
    /// Answer the seven expert questions per lesion into `ack.json`.
    Ack,
    /// Discover features from the expert knowledge into `features.json`.
    Discover,
    /// Generate per-patient values and write `augmented.csv`.
    Augment,
    /// Gaussian baseline values for the six vitals.
    Baseline,
    /// Backend estimates of the six vitals from report and demographics.
    Existing,
    /// Train and score classifiers on every feature set; MSE tables.
    Eval,
    /// Render CSV and text tables from `eval.json`.
    Report,
    /// Every phase in order; with --ablation the ablation run is added.
    Run,
}

#[derive(Debug, Subcommand)]
pub enum IndexAction {
    Build,
    Query {
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        lesion: Option<Lesion>,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            ablation: self.ablation,
            offline: self.offline,
            seed: self.seed,
            cache_mode: self.cache_mode,
            output_dir: self.output_dir.clone(),
            cache_dir: self.cache_dir.clone(),
            workers: self.workers,
            sources: self.sources.clone(),
            scope: self.scope,
            corpus_dir: self.corpus_dir.clone(),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .global
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let settings = Settings::load(path, &cli.global.overrides())?;
    std::fs::create_dir_all(&settings.output_dir)?;
    let ctx = Context::new(settings);
    use commands::*;
    match &cli.command {
        Command::Ingest => ingest::run(&ctx),
        Command::Index { action } => match action {
            None | Some(IndexAction::Build) => index::build(&ctx),
            Some(IndexAction::Query { text, k, lesion }) => index::query(&ctx, text, *k, *lesion),
        },
        Command::Ack => ack::run(&ctx),
        Command::Discover => discover::run(&ctx),
        Command::Augment => augment::run(&ctx, ctx.settings.config.augment.ablation),
        Command::Baseline => baseline::run(&ctx),
        Command::Existing => existing::run(&ctx),
        Command::Eval => eval::run(&ctx),
        Command::Report => report::run(&ctx),
        Command::Run => run_all(&ctx),
    }
}

fn run_all(ctx: &Context) -> Result<(), CliError> {
    use commands::*;
    ingest::run(ctx)?;
    index::build(ctx)?;
    ack::run(ctx)?;
    discover::run(ctx)?;
    augment::run(ctx, false)?;
    if ctx.settings.config.augment.ablation {
        augment::run(ctx, true)?;
    }
    baseline::run(ctx)?;
    if ctx.settings.config.eval.existing_values {
        existing::run(ctx)?;
    }
    eval::run(ctx)?;
    report::run(ctx)
}
