//! `graspkit`: reproducible pipelines over grasp captures and synthetic scenarios.
//!
//! Exit codes: 0 success, 1 domain error (bad input data, solver failure), 2 usage error.

mod analyze;
mod config;
mod contact;
mod formats;
mod learn;
mod pipeline;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use run::UsageError;

#[derive(Parser, Debug)]
#[command(name = "graspkit", version, about = "Grasp reconstruction and contact prediction pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON file overlaid on the defaults; flags override it in turn.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for stochastic steps; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic grasp scenario into a grasp directory.
    Synth(pipeline::SynthArgs),
    /// Reconstruct object-frame hand joints from a grasp directory's observation.
    Reconstruct(pipeline::ReconstructArgs),
    /// Map a raw per-vertex field (e.g. thermal intensity) to a contact map.
    ContactNormalize(contact::NormalizeArgs),
    /// Compute per-point hand features for a grasp.
    Features(learn::FeaturesArgs),
    /// Proximity-field contact prediction, optionally calibrated on measured grasps.
    Heuristic(contact::HeuristicArgs),
    /// Train the per-point contact classifier.
    Train(learn::TrainArgs),
    /// Predict a contact map with a trained model.
    Predict(learn::PredictArgs),
    /// Score predicted contact maps, joints, or penetration.
    Eval(contact::EvalArgs),
    /// Dataset analyses over a set of grasp directories.
    Analyze(analyze::AnalyzeArgs),
    /// Fit the kinematic hand model to skeletons.
    FitHand(pipeline::FitHandArgs),
    /// Reconstruction accuracy as one synthetic parameter varies.
    Sweep(pipeline::SweepArgs),
}

fn init_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("GRASPKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("GRASPKIT_THREADS must be a positive integer, got {v:?}")))?;
    // Fails only if a pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => pipeline::synth(a),
        Command::Reconstruct(a) => pipeline::reconstruct(a),
        Command::ContactNormalize(a) => contact::normalize(a),
        Command::Features(a) => learn::features(a),
        Command::Heuristic(a) => contact::heuristic(a),
        Command::Train(a) => learn::train(a),
        Command::Predict(a) => learn::predict(a),
        Command::Eval(a) => contact::eval(a),
        Command::Analyze(a) => analyze::analyze(a),
        Command::FitHand(a) => pipeline::fit_hand(a),
        Command::Sweep(a) => pipeline::sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("\nRun `graspkit --help` for usage.");
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
