//! `vldsrc` command-line harness.

mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vldsrc::lift::{Budget, DEFAULT_MAX_TYPES};
use vldsrc::Error;

#[derive(Debug, Parser)]
#[command(name = "vldsrc", version, about = "Optimal variable-length coding with side-information")]
pub struct Cli {
    /// Ceiling on enumerated joint type classes.
    #[arg(long, global = true, env = "VLDSRC_MAX_TYPES", default_value_t = DEFAULT_MAX_TYPES)]
    pub max_types: u64,

    /// Write CSV to this path instead of JSON to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct SourceArg {
    /// Source document path or fixture name.
    #[arg(long)]
    pub source: String,
}

#[derive(Debug, Args, Clone)]
pub struct PointArgs {
    #[command(flatten)]
    pub source: SourceArg,
    /// Blocklength.
    #[arg(long, default_value_t = 1)]
    pub n: u32,
    /// Error probability as `p/q` or a decimal.
    #[arg(long)]
    pub eps: String,
    /// Error criterion: `max` or `avg`.
    #[arg(long, default_value = "max")]
    pub criterion: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Entropy, varentropies and third moment of a source.
    Measures(SourceArg),
    /// Conditional and unconditional ε-cutoff entropies.
    CutoffEntropy {
        #[command(flatten)]
        source: SourceArg,
        #[arg(long, default_value_t = 1)]
        n: u32,
        #[arg(long)]
        eps: String,
    },
    /// Optimal average codeword length.
    Lstar(PointArgs),
    /// One-shot lower and upper bounds around the optimal length.
    Bounds(PointArgs),
    /// Optimal code thresholds (and the codebook at n = 1).
    BuildCode(PointArgs),
    /// Monte Carlo run of the optimal code.
    Simulate {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Guessing strategy with giving up: value, bracket and optional simulation.
    Guess {
        #[command(flatten)]
        point: PointArgs,
        /// Error cost `c_e` (positive, not an integer).
        #[arg(long)]
        cost: f64,
        /// Number of simulated trials.
        #[arg(long)]
        simulate: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Second-order approximation of the optimal length.
    SecondOrder {
        #[command(flatten)]
        source: SourceArg,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value = "max")]
        criterion: String,
    },
    /// Exact optimal lengths against the second-order approximation over n.
    Scan {
        #[command(flatten)]
        source: SourceArg,
        /// Blocklengths: `N`, `a:b`, `a:b:step` or `a:b:xfactor`, comma separated.
        #[arg(long)]
        n: String,
        /// Comma-separated error probabilities.
        #[arg(long)]
        eps: String,
        /// Comma-separated criteria.
        #[arg(long, default_value = "max,avg")]
        criterion: String,
        /// Flag rows whose |residual| / log2 n exceeds this value.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// List fixtures, or print one as a source document.
    Fixtures {
        #[arg(long)]
        name: Option<String>,
        /// Side-information alphabet size for `appendix-b`.
        #[arg(long)]
        y_max: Option<usize>,
        /// Per-row discarded mass for `appendix-b`.
        #[arg(long)]
        tail_tol: Option<f64>,
    },
    /// Replay of the swap-and-drop normalization on the three-point source.
    FlawedTrace,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } | Error::Domain(_) | Error::Json(_) => 2,
        Error::BudgetExceeded { .. } => 3,
        Error::Invariant(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let budget = Budget::new(cli.max_types);
    let run = || commands::run(&cli.command, budget);
    let result = match cli.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(Error::Invariant(format!("worker pool: {e}"))),
        },
        None => run(),
    };
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &report.csv) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => {
            let text = serde_json::to_string_pretty(&report.json).expect("reports serialize");
            let mut stdout = std::io::stdout().lock();
            if let Err(e) = writeln!(stdout, "{text}") {
                // a closed pipe downstream is not a failure of the command
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    eprintln!("error: stdout: {e}");
                    return ExitCode::from(2);
                }
            }
        }
    }
    ExitCode::SUCCESS
}
