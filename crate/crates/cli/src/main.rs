//! Command-line driver for the low-lying zero experiments.

mod checks;
mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::{ExperimentConfig, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Exit status for a failed verification.
const EXIT_VERIFY: u8 = 2;
/// Exit status for budget, truncation or accuracy failures.
const EXIT_NUMERIC: u8 = 3;
/// Exit status for invalid input.
const EXIT_INPUT: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "lowlying", version, about = "One-level density of low-lying zeros for holomorphic newforms")]
struct Cli {
    /// JSON config file; command-line flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Harmonic average Δ_q(m, n) (or its newform part).
    Delta(commands::DeltaArgs),
    /// One-level density statistic for each Q, as CSV.
    Density,
    /// The two-prime sum Σ₁ by direct summation and by sieve expansion, as CSV.
    Sigma1(commands::Sigma1Args),
    /// Bounds on the Bessel transforms of the weight kernels.
    KuznetsovCheck(commands::KuznetsovArgs),
    /// Cusp enumeration and Eisenstein coefficient bounds.
    EisensteinCheck(commands::EisensteinArgs),
    /// Identities for Kloosterman sums, characters and Gauss sums.
    ArithCheck(commands::ArithArgs),
    /// Fast end-to-end suite touching every module.
    Selftest,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    use lowlying::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Budget { .. } | Error::TruncationInfeasible { .. } | Error::Accuracy { .. }) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Delta(a) => commands::delta(cfg, a),
        Command::Density => commands::density(cfg),
        Command::Sigma1(a) => commands::sigma1(cfg, a),
        Command::KuznetsovCheck(a) => commands::kuznetsov_check(cfg, a),
        Command::EisensteinCheck(a) => commands::eisenstein_check(cfg, a),
        Command::ArithCheck(a) => commands::arith_check(cfg, a),
        Command::Selftest => commands::selftest(cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match ExperimentConfig::resolve(&cli.overrides, cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    eprintln!("lowlying {}", env!("CARGO_PKG_VERSION"));
    eprintln!("config: {}", serde_json::to_string(&cfg).unwrap_or_default());
    let start = Instant::now();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers()).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let outcome = pool.install(|| run(&cli, &cfg));
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
