//! `ssd` command-line tool.
//!
//! Errors are reported as a single line on stderr,
//! `error code=<exit> kind=<kind> message=<json string>`, and the process
//! exits with the matching code.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use ssd_core::app::{cmd_generate, run};
use ssd_core::composer::ComposeMode;
use ssd_core::sweep::FirstKPolicy;
use ssd_core::synthbench::PlantedScenario;
use ssd_core::{RunConfig, RunMode, SsdError};

#[derive(Parser)]
#[command(
    name = "ssd",
    version,
    about = "Supervised semantic differential with PCA-sweep K selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep K over a grid, select it and write diagnostics, fit, clusters and curves.
    Sweep(RunArgs),
    /// Fit and interpret at a single K.
    FixedK {
        /// Number of principal components to keep.
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a synthetic corpus with a planted gradient.
    Generate(GenerateArgs),
    /// Print the fully resolved configuration as TOML.
    ShowConfig(RunArgs),
}

/// Every flag overrides the matching key of `--config`.
#[derive(Args, Default)]
struct RunArgs {
    /// Flat TOML file with run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Words never reported as neighbors, one per line.
    #[arg(long)]
    exclude: Option<PathBuf>,
    /// `word count` lines used for SIF weights instead of corpus counts.
    #[arg(long)]
    frequencies: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    sif_a: Option<f64>,
    /// Number of top components removed from the composed vectors.
    #[arg(long)]
    remove_top: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    compose_mode: Option<ComposeMode>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    k_start: Option<usize>,
    #[arg(long)]
    k_stop: Option<usize>,
    #[arg(long)]
    k_step: Option<usize>,
    #[arg(long, value_parser = parse_first_k)]
    first_k: Option<FirstKPolicy>,
    #[arg(long)]
    auck_radius: Option<usize>,
    #[arg(long)]
    median_win: Option<usize>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    cluster_k_min: Option<usize>,
    #[arg(long)]
    cluster_k_max: Option<usize>,
    /// Only report neighbors that occur in the corpus.
    #[arg(long)]
    restrict_to_corpus: bool,
    #[arg(long)]
    snippets: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_mode(s: &str) -> Result<ComposeMode, String> {
    match s {
        "whole_document" => Ok(ComposeMode::WholeDocument),
        "lexicon_window" => Ok(ComposeMode::LexiconWindow),
        _ => Err("expected whole_document or lexicon_window".into()),
    }
}

fn parse_first_k(s: &str) -> Result<FirstKPolicy, String> {
    match s {
        "impute" => Ok(FirstKPolicy::Impute),
        "exclude" => Ok(FirstKPolicy::Exclude),
        _ => Err("expected impute or exclude".into()),
    }
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, SsdError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let a = self;
        for (slot, v) in [
            (&mut cfg.embeddings, a.embeddings),
            (&mut cfg.corpus, a.corpus),
            (&mut cfg.lexicon, a.lexicon),
            (&mut cfg.exclude, a.exclude),
            (&mut cfg.frequencies, a.frequencies),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        if a.outcome.is_some() {
            cfg.outcome = a.outcome;
        }
        if a.workers.is_some() {
            cfg.workers = a.workers;
        }
        if a.restrict_to_corpus {
            cfg.restrict_to_corpus = true;
        }
        overlay!(
            cfg,
            a,
            out_dir,
            sif_a,
            remove_top,
            compose_mode,
            window,
            k_start,
            k_stop,
            k_step,
            first_k,
            auck_radius,
            median_win,
            neighbors,
            cluster_k_min,
            cluster_k_max,
            snippets,
            seed
        );
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "synth")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    authors: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Size of the signal subspace.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    tokens: Option<usize>,
}

impl GenerateArgs {
    fn scenario(&self) -> PlantedScenario {
        let d = PlantedScenario::default();
        PlantedScenario {
            seed: self.seed.unwrap_or(d.seed),
            n_authors: self.authors.unwrap_or(d.n_authors),
            vocab_size: self.vocab.unwrap_or(d.vocab_size),
            dim: self.dim.unwrap_or(d.dim),
            effective_rank: self.rank.unwrap_or(d.effective_rank),
            noise_sd: self.noise_sd.unwrap_or(d.noise_sd),
            tokens_per_author: self.tokens.unwrap_or(d.tokens_per_author),
        }
    }
}

fn execute(command: Command) -> Result<(), SsdError> {
    match command {
        Command::Sweep(args) => {
            let mut cfg = args.resolve()?;
            cfg.mode = RunMode::Sweep;
            report(run(&cfg)?);
        }
        Command::FixedK { k, run: args } => {
            let mut cfg = args.resolve()?;
            cfg.mode = RunMode::FixedK;
            cfg.fixed_k = Some(k);
            report(run(&cfg)?);
        }
        Command::Generate(args) => {
            let g = cmd_generate(&args.scenario(), &args.out_dir)?;
            info!("wrote {} authors to {}", g.records.len(), args.out_dir.display());
            println!("{}", args.out_dir.display());
        }
        Command::ShowConfig(args) => {
            print!("{}", args.resolve()?.to_toml()?);
        }
    }
    Ok(())
}

fn report(summary: ssd_core::app::RunSummary) {
    println!(
        "k={} r2_adj={} p={}",
        summary.k,
        ssd_core::report::fmt_sig(summary.r2_adj),
        ssd_core::regression::format_p(summary.p_value)
    );
    for f in summary.files {
        println!("{}", f.display());
    }
}

fn error_line(code: i32, kind: &str, message: &str) -> String {
    let msg = serde_json::to_string(message.lines().next().unwrap_or("")).expect("string serializes");
    format!("error code={code} kind={kind} message={msg}")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.trim_start_matches("error: ");
            eprintln!("{}", error_line(2, "usage", first));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.exit_code(), e.kind(), &e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
