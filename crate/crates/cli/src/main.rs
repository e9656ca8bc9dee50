//! `fbpick`: synthetic-data generation, corruption, training, picking,
//! refinement, evaluation, and reporting for first-break experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. All randomness
//! derives from `--seed`; reruns with identical arguments produce
//! byte-identical artifacts.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "fbpick", version, about = "First-break picking experiments")]
struct Cli {
    /// Flat JSON config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Spr,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Subset {
    Train,
    Val,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known first-breaks.
    Generate {
        #[arg(long)]
        gathers: Option<usize>,
        #[arg(long)]
        traces: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        sample_rate_ms: Option<f64>,
        /// Wavelet center frequency in Hz.
        #[arg(long)]
        freq: Option<f64>,
        /// Background noise std relative to the wavelet amplitude.
        #[arg(long)]
        noise_floor: Option<f64>,
        /// Exponential amplitude decay per trace.
        #[arg(long)]
        decay: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        name: Option<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write a corrupted copy of a dataset (signal and/or label noise).
    Corrupt {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Signal noise level NL; per trace sigma = max|x| * NL.
        #[arg(long)]
        signal_nl: Option<f64>,
        /// Label displacement variance (Gaussian, rounded, clamped).
        #[arg(long)]
        label_var: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the predictor (SPR or the plain-BCE baseline arm).
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        kernel: Option<usize>,
        #[arg(long)]
        window_samples: Option<usize>,
        #[arg(long)]
        window_traces: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Train/val/test ratios, comma separated.
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        split_seed: Option<u64>,
        /// Continue from the run directory's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Automatic picking with a trained model.
    Pick {
        #[arg(long)]
        run: PathBuf,
        /// Dataset to pick on; defaults to the run's training dataset.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        subset: Option<Subset>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Refine a dataset's manual picks with a trained model.
    Refine {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        subset: Option<Subset>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score predicted picks against a reference dataset.
    Evaluate {
        /// Reference dataset (ground truth picks).
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Directory of predicted pick files (<gather_id>.csv).
        #[arg(long)]
        pred: PathBuf,
        /// Borrow the split parameters of a training run.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, value_enum)]
        subset: Option<Subset>,
        /// Hit-rate tolerances, comma separated.
        #[arg(long)]
        deltas: Option<String>,
        /// Row label in the report table.
        #[arg(long)]
        method: Option<String>,
        /// Report CSV to append to (header written when new).
        #[arg(short, long)]
        out: PathBuf,
        /// Also store the unrounded report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Combine evaluation CSVs into one table, optionally with SVG overlays.
    Report {
        /// Evaluation CSVs to merge.
        #[arg(long, num_args = 1.., required = true)]
        evals: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Dataset providing amplitudes and reference picks for overlays.
        #[arg(long)]
        overlay_data: Option<PathBuf>,
        /// Directory of predicted pick files for overlays.
        #[arg(long)]
        overlay_picks: Option<PathBuf>,
        /// Gather ids to render, comma separated.
        #[arg(long)]
        overlay_gathers: Option<String>,
    },
}

fn main() {
    if let Ok(workers) = std::env::var("FBPICK_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
