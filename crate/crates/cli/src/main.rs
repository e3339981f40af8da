use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "lcpmf", version, about = "Log-concave maximum likelihood estimation for pmfs on the integers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Optimality tolerance of the log-concave solver.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    /// Maximum number of active-set iterations.
    #[arg(long = "max-iter", global = true, default_value_t = 200)]
    pub max_iter: usize,
    /// Write the main artifact here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Artifact format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Also write long-format plot data (series,x,y) to this file.
    #[arg(long = "plot-data", global = true)]
    pub plot_data: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Log-concave MLE from a counts CSV (value,count).
    Fit { counts: PathBuf },
    /// Kullback-Leibler projection of a pmf CSV (value,prob) onto the log-concave class.
    Project { pmf: PathBuf },
    /// Check the optimality conditions of a saved fit.
    Verify {
        fit: PathBuf,
        /// Counts CSV, or a pmf CSV with --pmf.
        data: PathBuf,
        /// Treat the data file as the pmf the fit projects.
        #[arg(long)]
        pmf: bool,
    },
    /// Pointwise confidence intervals for the MLE.
    Ci {
        counts: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
    },
    /// Log-concave pmf inflated by a point mass.
    Mixture {
        counts: PathBuf,
        /// Inflation point.
        #[arg(long)]
        inflate: i64,
        #[arg(long = "max-em", default_value_t = 500)]
        max_em: usize,
    },
    /// Compare estimators on samples from a known distribution.
    Simulate {
        /// poisson:L, geometric:P, negbin:R,P or triangular:A
        #[arg(long)]
        dist: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value = "emp,lc,pois,geom,nbin")]
        estimators: String,
    },
    /// Mean CI length at a point for triangular pmfs over a range of endpoints.
    Cilen {
        /// Endpoint range lo:hi (inclusive).
        #[arg(long, default_value = "9:16")]
        a: String,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 9)]
        x: i64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Hellinger rate of the MLE towards the log-concave projection of a pmf.
    Rate {
        /// pmf CSV (value,prob) of the truth.
        #[arg(long, conflicts_with = "dist")]
        pmf: Option<PathBuf>,
        /// Named truth, as in `simulate`.
        #[arg(long)]
        dist: Option<String>,
        /// Comma-separated sample sizes.
        #[arg(long, default_value = "100,1000,10000")]
        n: String,
        #[arg(long, default_value_t = 200)]
        reps: usize,
    },
    /// How often given points are knots of the MLE.
    Knots {
        #[arg(long)]
        dist: String,
        /// Comma-separated points; defaults to the interior knots of the truth.
        #[arg(long)]
        knots: Option<String>,
        #[arg(long, default_value = "100,500,2000,5000")]
        n: String,
        #[arg(long, default_value_t = 200)]
        reps: usize,
    },
}

/// Exit status for a failed verification.
const EXIT_NOT_OPTIMAL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    lcpmf::parallel::init_from_env();
    let cli = Cli::parse();
    match commands::run(cli.command, &cli.common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_OPTIMAL),
        Err(err) => match err.downcast_ref::<lcpmf::Error>() {
            Some(lcpmf::Error::SolverFailure { iterations, gap, best_psi }) => {
                let diag = serde_json::json!({
                    "error": "solver_failure",
                    "iterations": iterations,
                    "gap": gap,
                    "best_psi": best_psi,
                });
                eprintln!("{diag}");
                ExitCode::from(EXIT_SOLVER)
            }
            _ => {
                eprintln!("error: {err:#}");
                ExitCode::from(EXIT_INVALID)
            }
        },
    }
}
