//! `adag` — multi-domain DAG learning from the command line.
//!
//! Subcommands: `generate` (synthetic corpora), `train` (augmented-
//! Lagrangian pre-training), `infer` (zero-shot adjacency estimates),
//! `evaluate` (SHD / relative-error / edge-count / runtime suite),
//! `spectra` (covariance eigenstructure of estimates) and `ablate-domains`
//! (accuracy vs number of training domains). Every command accepts a flat
//! `key = value` config file; command-line flags override file keys and the
//! resolved settings land in `resolved_config.txt` next to the outputs.

mod commands;
mod config;
mod observer;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigBag;

#[derive(Parser)]
#[command(name = "adag", version, about = "Multi-domain DAG learning engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain corpus.
    Generate(GenerateArgs),
    /// Pre-train the attention kernel map on a corpus.
    Train(TrainArgs),
    /// Zero-shot adjacency inference over a corpus.
    Infer(InferArgs),
    /// Metric suite over a corpus (adag or notears method).
    Evaluate(EvaluateArgs),
    /// Covariance spectrum of inferred adjacency matrices.
    Spectra(SpectraArgs),
    /// Accuracy versus training-domain count.
    AblateDomains(AblateArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Worker threads (ADAG_THREADS mirrors this; default 1, deterministic
    /// for every value).
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn resolve_threads(&self, bag: &mut ConfigBag) -> anyhow::Result<usize> {
        commands::resolve_threads_value(bag, self.threads)
    }
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// heterogeneous | order-consistent.
    #[arg(long)]
    setting: Option<String>,
    /// Variable count.
    #[arg(long)]
    d: Option<usize>,
    /// Samples per domain.
    #[arg(long)]
    n: Option<usize>,
    /// Number of domains.
    #[arg(long, short)]
    m: Option<usize>,
    /// Expected edges per variable (ER degree).
    #[arg(long)]
    degree: Option<usize>,
    /// gaussian-equal-variance | exponential | gumbel.
    #[arg(long)]
    noise: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed topological order for order-consistent corpora, as
    /// comma-separated positions (position of variable i at index i).
    #[arg(long)]
    order: Option<String>,
}

/// Training hyperparameter flags shared by train and ablate-domains.
#[derive(Args)]
pub struct TrainFlags {
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    rho0: Option<f64>,
    /// Progress rate c in (0,1).
    #[arg(long = "progress-rate")]
    progress_rate: Option<f64>,
    /// Constraint tolerance.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    rho_factor: Option<f64>,
    #[arg(long)]
    rho_cap: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs_first: Option<usize>,
    #[arg(long)]
    epochs_rest: Option<usize>,
    #[arg(long)]
    lr_first: Option<f64>,
    #[arg(long)]
    lr_rest: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    lr_decay_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Attention head dimension (default: round(sqrt(n))).
    #[arg(long)]
    k: Option<usize>,
    /// Attention layer count (default: 15 for d <= 10, else 20).
    #[arg(long)]
    layers: Option<usize>,
    /// Edge threshold recorded with the run.
    #[arg(long)]
    omega: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Output run directory (checkpoints + training_log.csv).
    #[arg(long)]
    out: PathBuf,
    /// Resume from a run directory holding theta.ckpt + state.ckpt.
    #[arg(long)]
    resume: Option<String>,
    /// Log every Nth step to training_log.csv.
    #[arg(long)]
    log_every: Option<usize>,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Trained checkpoint (theta.ckpt).
    #[arg(long)]
    ckpt: PathBuf,
    /// Output directory for a_hat_<idx>.mat files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// adag | notears.
    #[arg(long)]
    method: Option<String>,
    /// Trained checkpoint (required for method adag).
    #[arg(long)]
    ckpt: Option<String>,
    /// Output directory for metrics.csv + metrics_summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Edge threshold.
    #[arg(long)]
    omega: Option<f64>,
    /// Duplicate-augment every domain to this sample count first.
    #[arg(long)]
    augment_to: Option<usize>,
    #[arg(long)]
    augment_seed: Option<u64>,
    /// Single-task L1 coefficient (method notears).
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    notears_lr: Option<f64>,
    #[arg(long)]
    notears_steps: Option<usize>,
    #[arg(long)]
    notears_max_outer: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
pub struct SpectraArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of a_hat_<idx>.mat files (output of infer).
    #[arg(long)]
    inferred: PathBuf,
    /// Output directory for spectra.csv.
    #[arg(long)]
    out: PathBuf,
    /// How many leading eigenvectors to keep.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training corpus (prefixes of it are used).
    #[arg(long)]
    corpus: PathBuf,
    /// Held-out evaluation corpus.
    #[arg(long)]
    test_corpus: PathBuf,
    /// Comma-separated domain counts, e.g. 500,2000.
    #[arg(long)]
    m_list: Option<String>,
    /// Output directory for ablation.csv and per-M models.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::cmd_generate(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Infer(args) => commands::cmd_infer(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
        Command::Spectra(args) => commands::cmd_spectra(args),
        Command::AblateDomains(args) => commands::cmd_ablate_domains(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
