//! `raman`: dataset generation, forward solves, training, evaluation and
//! inverse design from the command line.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use raman_core::Scheme;

#[derive(Parser)]
#[command(name = "raman", version, about = "Inverse design of distributed Raman amplifiers")]
struct Cli {
    /// Worker threads for dataset generation and evaluation.
    #[arg(long, global = true, env = "RAMAN_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct SolverArgs {
    /// Raman gain table as JSON `{"nodes": [[shift_thz, g_per_w_km], ...]}`.
    #[arg(long)]
    gain_table: Option<PathBuf>,
    /// Per-channel launch power.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    launch_dbm: f64,
    /// Internal integration step.
    #[arg(long, default_value_t = 0.1)]
    step_km: f64,
    /// Include Raman coupling among the signal channels.
    #[arg(long)]
    signal_coupling: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample pump configurations and solve their signal profiles.
    Generate {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Longitudinal sampling step (defaults per scheme).
        #[arg(long)]
        dz_km: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve one pump configuration and write its signal profile.
    Solve {
        #[arg(long)]
        scheme: Scheme,
        /// Comma-separated `P_mW:lambda_nm:co|counter`, in the scheme's pump order.
        #[arg(long)]
        pumps: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the pump power trajectories.
        #[arg(long)]
        pump_out: Option<PathBuf>,
        #[arg(long)]
        dz_km: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Split a dataset into train/val/test, keeping per-pixel extrema in train.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        val: usize,
        #[arg(long)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        val_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Train the inverse model.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Training configuration JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch `epoch,train_mse,val_mse` CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a trained model on a test set by re-solving its predictions.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        per_sample: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Predict pumps for a target profile CSV.
    Design {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Re-solve the prediction and report the worst-pixel error.
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Best validation MSE as a function of training set size.
    Sweep {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the generated pool (validation uses a derived seed).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        val_count: usize,
        /// Use an existing dataset as the pool instead of generating one.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Use an existing validation dataset.
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
