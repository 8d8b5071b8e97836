//! `twomode`: phase-estimation bounds for two-mode interferometers.
//!
//! Exit codes: 0 success, 2 validation error, 64 usage error,
//! 65 malformed JSON input, 66 unreadable input file.

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Malformed(String),
    Validation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Usage(_) => 64,
            CliError::Malformed(_) => 65,
            CliError::Io(_) => 66,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Malformed(m) => write!(f, "malformed JSON: {m}"),
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl From<twomode_core::Error> for CliError {
    fn from(e: twomode_core::Error) -> Self {
        match e {
            twomode_core::Error::Json(j) => CliError::Malformed(j.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "twomode", version, about = "Phase-estimation sensitivity bounds for two-mode interferometers")]
struct Cli {
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// A state given as a JSON file path or inline JSON.
#[derive(Debug, Args)]
struct StateArg {
    #[arg(long)]
    state: String,
}

#[derive(Debug, Args)]
struct Transform {
    /// `x`, `y`, `z` or `a,b,c`.
    #[arg(long, default_value = "y")]
    direction: String,
    #[arg(long, allow_hyphen_values = true)]
    theta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phi0: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantum Fisher information of a state.
    Qfi {
        #[command(flatten)]
        state: StateArg,
        #[arg(long, default_value = "z")]
        direction: String,
        /// Use the number operator as generator instead of `J_n`.
        #[arg(long)]
        number: bool,
        /// Maximize over directions.
        #[arg(long, conflicts_with = "number")]
        best: bool,
        /// Shots per estimate, for the quantum Cramér-Rao bound.
        #[arg(long)]
        m: Option<u64>,
    },
    /// Classical Fisher information of a measurement.
    Cfi {
        #[command(flatten)]
        state: StateArg,
        /// POVM as a JSON file path or inline JSON.
        #[arg(long)]
        povm: String,
        #[command(flatten)]
        transform: Transform,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        bias_derivative: f64,
        /// Also report the (φ₀, θ) Fisher matrix.
        #[arg(long)]
        matrix: bool,
    },
    /// Outcome probabilities `P(ε|θ)`.
    Prob {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        povm: String,
        #[command(flatten)]
        transform: Transform,
        /// Also report the per-sector decomposition.
        #[arg(long)]
        sectors: bool,
    },
    /// Shot-noise and Heisenberg limits.
    Bound {
        #[arg(long, conflicts_with = "state", allow_hyphen_values = true)]
        mean_n: Option<f64>,
        #[arg(long, requires = "mean_n", allow_hyphen_values = true)]
        mean_n2: Option<f64>,
        #[arg(long)]
        state: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
    },
    /// Entanglement witnesses: χ², depth, best direction.
    Witness {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        direction: Option<String>,
        /// Drop number coherences before evaluating.
        #[arg(long)]
        project: bool,
    },
    /// Monte Carlo maximum-likelihood experiment.
    Simulate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, env = "TWOMODE_WORKERS")]
        workers: Option<usize>,
        /// Also write the summary row as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Euler-angle transformation to axis-angle and Mach-Zehnder form.
    Convert {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phi0: f64,
        #[arg(long, allow_hyphen_values = true)]
        psi: f64,
        #[arg(long, allow_hyphen_values = true)]
        vartheta: f64,
        #[arg(long, allow_hyphen_values = true)]
        phi: f64,
    },
    /// Heisenberg-limit branches over a range of `m` (CSV).
    Crossover {
        #[arg(long, conflicts_with = "mean_n")]
        state: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        mean_n: Option<f64>,
        #[arg(long, requires = "mean_n", allow_hyphen_values = true)]
        mean_n2: Option<f64>,
        /// `lo:hi`
        #[arg(long, default_value = "1:1000")]
        m_range: String,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
