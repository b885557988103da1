use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ntk::error::{CliError, CliResult};
use ntk::run::{cmd_compare, cmd_fit_eval, cmd_kernel, cmd_oracle, KernelOptions, RunOutcome};
use ntk::Manifest;

/// Exact neural tangent kernels: Gram computation, evaluation protocols,
/// classifier comparison and finite-width network runs.
///
/// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "ntk", version)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the train Gram (and train x test cross Gram) as NTKGRAM1 files.
    Kernel {
        manifest: PathBuf,
        /// Also write the Grams as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Run the manifest's protocol (uci-cv, image-subsample, fewshot, nn-baseline).
    FitEval { manifest: PathBuf },
    /// Friedman rank, P90/P95, PMA and pairwise Wilcoxon tests on an accuracy table.
    Compare { manifest: PathBuf },
    /// Finite-width network runs (width sweep or gradient-descent training).
    Oracle { manifest: PathBuf },
}

fn run(cli: Cli) -> CliResult<RunOutcome> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    match cli.command {
        Command::Kernel { manifest, csv } => cmd_kernel(&Manifest::load(&manifest)?, KernelOptions { csv }),
        Command::FitEval { manifest } => cmd_fit_eval(&Manifest::load(&manifest)?),
        Command::Compare { manifest } => cmd_compare(&Manifest::load(&manifest)?),
        Command::Oracle { manifest } => cmd_oracle(&Manifest::load(&manifest)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for p in &outcome.outputs {
                log::info!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
