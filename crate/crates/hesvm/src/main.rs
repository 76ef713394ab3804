use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hesvm::commands;
use hesvm::config::{Overrides, RunConfig};
use hesvm::AppResult;

/// Hybrid-kernel SVM with encrypted inference over CKKS.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "hesvm.toml")]
    config: PathBuf,
    /// Output directory (overrides `[run] out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Randomness seed for keys and encryption (overrides `[run] seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use n = 32768 with a [60, 30, 30, 30] chain.
    #[arg(long, global = true)]
    paper_params: bool,
    /// Run `infer` on plaintext data instead.
    #[arg(long, global = true)]
    plaintext: bool,
    /// Encrypt the model weights as well as the samples.
    #[arg(long, global = true)]
    encrypt_coeffs: bool,
    /// Inference threads (overrides `[run] workers`).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest the raw CSV, split, standardize and select features.
    Prepare,
    /// Train the SVM on the prepared training split.
    Train,
    /// Generate CKKS keys for the trained model's layout.
    Keygen,
    /// Encrypt a prepared split.
    Encrypt {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Score the encrypted test split (or the plaintext one).
    Infer,
    /// Model comparison, ROC and stage reports.
    Eval,
    /// Batch-size scaling benchmark.
    Bench,
    /// Write the synthetic dataset to `[data] path`.
    GenSynth,
}

fn run(cli: &Cli) -> AppResult<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    cfg.apply(&Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        workers: cli.workers,
        paper_params: cli.paper_params,
        encrypt_coeffs: cli.encrypt_coeffs,
    })?;
    match &cli.command {
        Command::Prepare => commands::prepare(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Keygen => commands::keygen(&cfg),
        Command::Encrypt { split } => commands::encrypt(&cfg, split),
        Command::Infer => commands::infer(&cfg, cli.plaintext).map(drop),
        Command::Eval => commands::eval(&cfg).map(drop),
        Command::Bench => commands::bench(&cfg).map(drop),
        Command::GenSynth => commands::gen_synth(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
