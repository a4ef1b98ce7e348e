use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpattn_cli::config::{self, BenchUtilityConfig, DpAttentionConfig, GenDatasetConfig, VerifyPrivacyConfig};
use dpattn_cli::{commands, CliError, CliResult, Outcome, EXIT_INPUT_ERROR};

/// Differentially private attention: dataset generation, private release and
/// verification campaigns.
#[derive(Debug, Parser)]
#[command(name = "dpattn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an (eta, alpha)-good dataset, optionally with a neighbour.
    GenDataset(Args),
    /// Release a private Gram matrix and report every requirement check.
    DpAttention(Args),
    /// Certificate and Monte-Carlo privacy check for a neighbouring pair.
    VerifyPrivacy(Args),
    /// Sweep k and record relative Frobenius errors of the mechanism.
    BenchUtility(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("DPATTN_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("DPATTN_THREADS = {v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<Outcome> {
    init_threads()?;
    match cli.command {
        Command::GenDataset(a) => commands::gen_dataset(&config::load::<GenDatasetConfig>(&a.config)?, &a.out),
        Command::DpAttention(a) => {
            commands::dp_attention_cmd(&config::load::<DpAttentionConfig>(&a.config)?, &a.out)
        }
        Command::VerifyPrivacy(a) => {
            commands::verify_privacy(&config::load::<VerifyPrivacyConfig>(&a.config)?, &a.out)
        }
        Command::BenchUtility(a) => {
            commands::bench_utility(&config::load::<BenchUtilityConfig>(&a.config)?, &a.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}
