//! Command-line orchestration of the whole pipeline.
//!
//! Every command reads a flat config file (see [`Config`]), accepts
//! `--set key=value` overrides, writes its artifacts under `out_dir`, and
//! leaves a [`RunManifest`] sidecar next to each artifact.

mod commands;
pub mod config;
pub mod manifest;
mod workspace;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::Config;
pub use manifest::{manifest_path, RunManifest};
pub use workspace::Workspace;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "lader", version, about = "Dense retrieval with click-log score fusion")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file; relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set m=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Full,
    DrOnly,
    LaOnly,
    LaBm25,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Full => "full",
            RunMode::DrOnly => "dr-only",
            RunMode::LaOnly => "la-only",
            RunMode::LaBm25 => "la-bm25",
        }
    }
}

#[derive(Debug, Args, Default, Clone)]
pub struct FusionArgs {
    /// One λ for every query group.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_head: Option<f64>,
    #[arg(long)]
    pub lambda_torso: Option<f64>,
    #[arg(long)]
    pub lambda_tail: Option<f64>,
    /// Similar queries kept.
    #[arg(long)]
    pub m: Option<usize>,
    /// Documents retrieved.
    #[arg(long)]
    pub n: Option<usize>,
    /// Length of each output ranking.
    #[arg(long)]
    pub k_out: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate inputs and write canonical copies plus click-derived qrels.
    Ingest,
    /// Build the query-log and document indexes.
    BuildIndex,
    /// Score the configured queries and write a TREC run file.
    Run {
        #[arg(long, value_enum, default_value = "full")]
        mode: RunMode,
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Evaluate a run file against qrels.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Accept runs and qrels that cover different queries.
        #[arg(long)]
        lenient: bool,
    },
    /// Re-run the full pipeline on seeded samples of the click log.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        proportions: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Regress per-query gains over retrieval-only on query features.
    Analyze {
        /// Retrieval-only run file; recomputed when omitted.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[command(flatten)]
        fusion: FusionArgs,
    },
    /// Interactive top-k with the log evidence behind it.
    Search {
        /// Free text to embed with the hash embedder.
        text: Option<String>,
        /// Look the query vector up in the embedding store instead.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, short, default_value_t = 10)]
        k: usize,
        #[arg(long, value_enum, default_value = "full")]
        mode: RunMode,
        #[command(flatten)]
        fusion: FusionArgs,
    },
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("LADER_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::arg(format!("LADER_THREADS must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::arg(format!("cannot start thread pool: {e}")))
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.global.config {
        Some(path) => Config::load(path)?,
        None => Config::new(std::env::current_dir().unwrap_or_default()),
    };
    for pair in &cli.global.overrides {
        cfg.apply_override(pair)?;
    }
    if let Some(dir) = &cli.global.out_dir {
        cfg.set("out_dir", &dir.display().to_string());
    }
    let ws = Workspace::new(cfg);
    thread_pool()?.install(|| commands::dispatch(&ws, cli.command))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
