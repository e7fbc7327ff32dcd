use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

/// Estimate a decreasing pmf from a sample partition with unknown species labels.
#[derive(Debug, Parser)]
#[command(name = "npmle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Random seed; written into every artifact.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML or JSON file whose settings override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct SaemArgs {
    /// Number of non-blob species modeled by SA-EM (default min(n, 2L)).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Lower bound on the non-blob probabilities in the M-step.
    #[arg(long)]
    c: Option<f64>,
    /// SA-EM iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Initial stochastic-approximation index.
    #[arg(long)]
    k0: Option<u64>,
    /// Step-size exponent: gamma_k = k^-exp.
    #[arg(long = "gamma-exp")]
    gamma_exp: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Naive, Good-Turing, check and (optionally) SA-EM estimates for one sample.
    Estimate {
        /// Partition such as `3,1,1,1`, or a label string with --labels.
        input: String,
        /// Read INPUT as discovery-order labels (`12231` or `1,2,2,3,1`).
        #[arg(long)]
        labels: bool,
        /// Also run SA-EM (same as including saem in --estimator).
        #[arg(long)]
        saem: bool,
        /// Comma-separated estimators: naive, good_turing, check, saem.
        #[arg(long)]
        estimator: Option<String>,
        #[command(flatten)]
        saem_args: SaemArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Exact MLE by brute force for samples of size at most 8.
    Oracle {
        input: String,
        #[arg(long)]
        labels: bool,
        /// Grid step of the simplex search.
        #[arg(long)]
        grid: Option<f64>,
        /// Also write the latent-map posterior at the exact MLE.
        #[arg(long)]
        posterior: bool,
        /// Latent-map length for --posterior (default n).
        #[arg(long = "K")]
        k: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo errors of one estimator on samples from a family.
    Simulate(Experiment),
    /// Error decay over an n grid with the fitted log-log slope.
    Rates(Experiment),
    /// Deviation bound curves (1 = extended MLE, 3 = sieved MLE) or the DKW comparison, as CSV.
    Bound {
        /// 1, 3 or dkw.
        #[arg(long)]
        theorem: Option<String>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        family: Option<String>,
        /// Support size for families other than uniform.
        #[arg(long)]
        size: Option<usize>,
        /// Range `1..1e6` (log-spaced), list `10,100` or single value.
        #[arg(long)]
        n: Option<String>,
        /// Points on a log-spaced range.
        #[arg(long)]
        points: Option<usize>,
        /// Constant C of the sieved bound.
        #[arg(long = "C")]
        c_const: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        /// Sieve size of the sieved bound (default ceil(sqrt n)).
        #[arg(long)]
        sieve: Option<usize>,
        /// DKW deviation threshold.
        #[arg(long)]
        eps: Option<f64>,
        /// DKW replicates per n.
        #[arg(long)]
        reps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Experiment {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    estimator: Option<String>,
    /// Range `100..3200` (doubling), list `100,400` or single value.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[command(flatten)]
    saem_args: SaemArgs,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
