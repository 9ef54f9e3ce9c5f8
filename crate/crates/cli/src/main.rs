//! `cvdensity`: holdout-likelihood selection among density estimators and the
//! Monte Carlo experiments around it.

mod commands;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "cvdensity", version, about = "Cross-validated selection among density estimators")]
pub struct Cli {
    /// JSON configuration file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for machine-readable output
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    pub parallel: usize,
    /// Config override, dotted path into the JSON (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// More log output (-v, -vv)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit procedures on part of a data file and pick the best holdout likelihood
    Select {
        /// One real per line; `#` starts a comment
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Size of the estimation part
        #[arg(long, conflicts_with = "ratio")]
        n1: Option<usize>,
        /// Fraction of the data used for estimation
        #[arg(long)]
        ratio: Option<f64>,
        /// Number of random splits combined by vote
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long, value_enum)]
        aggregation: Option<AggregationArg>,
        /// Shuffle before a single split instead of splitting in file order
        #[arg(long)]
        random_split: bool,
    },
    /// Run a replicated selection experiment
    Simulate,
    /// Estimate convergence rates of d_H, from a config or a fixture of losses
    Rates {
        /// Lines of `n d_H` pairs (comma or whitespace separated)
        #[arg(long, value_name = "FILE", conflicts_with = "config")]
        fixture: Option<PathBuf>,
    },
    /// Evaluate tail bounds, or verify them by simulation with --config
    Bounds {
        #[arg(long)]
        n2: Option<usize>,
        #[arg(long = "v-sq")]
        v_sq: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        /// Lemma-1 threshold b; defaults to c·v²
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        /// Number of procedures, for the misselection bound
        #[arg(long)]
        m: Option<usize>,
    },
    /// Check the three consistency conditions for given inputs
    CheckConditions {
        #[arg(long)]
        n1: Option<usize>,
        #[arg(long)]
        n2: Option<usize>,
        /// Defaults to the number of --v-sq entries
        #[arg(long)]
        m: Option<usize>,
        /// Comma-separated v² values, the best procedure first
        #[arg(long = "v-sq", value_delimiter = ',')]
        v_sq: Vec<f64>,
        #[arg(long)]
        s: Option<f64>,
        /// The constant M in d_K ≤ M·d_H²
        #[arg(long = "M")]
        m_const: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum AggregationArg {
    MajorityVote,
    ProductOfLikelihoods,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
