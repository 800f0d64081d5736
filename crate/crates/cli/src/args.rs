use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Infer perceptual noise, action variability and cost-function parameters
/// from continuous responses in production and reproduction tasks.
#[derive(Debug, Parser)]
#[command(name = "prodrep", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Any of them may also be set in the config file.
#[derive(Debug, Default, Args, Serialize)]
pub struct Common {
    /// Flat TOML file of settings; flags override it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Hold sigma_p fixed at this value.
    #[arg(long, global = true)]
    pub sigma_p: Option<f64>,
    /// Surrogate weight file; without it the exact optimizer is used.
    #[arg(long, global = true)]
    pub surrogate: Option<PathBuf>,
    /// Gauss-Legendre nodes per integration piece.
    #[arg(long, global = true)]
    pub quad_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub warmup: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit each subject in a trial CSV (columns target, response, optional subject_id).
    Fit(FitArgs),
    /// Simulate trials from given parameters.
    Simulate(SimulateArgs),
    /// Aim deviation over a (sigma_a, sigma_p) grid.
    Feasibility(FeasibilityArgs),
    /// Cost over a target x action grid.
    CostSurface(CostSurfaceArgs),
    /// Train, evaluate or inspect an aim-point surrogate network.
    Surrogate {
        #[command(subcommand)]
        action: SurrogateCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum SurrogateCommand {
    Train(TrainArgs),
    Eval(EvalArgs),
    Info(InfoArgs),
}

#[derive(Debug, Default, Args, Serialize)]
pub struct FitArgs {
    /// Trial CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub quad_sigmas: Option<f64>,
    /// Knots of the interpolated aim curve (exact path).
    #[arg(long)]
    pub aim_grid: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Tune proposal scales during warm-up.
    #[arg(long)]
    pub adapt: Option<bool>,
    #[arg(long)]
    pub step_alpha: Option<f64>,
    #[arg(long)]
    pub step_beta: Option<f64>,
    #[arg(long)]
    pub step_sigma_p: Option<f64>,
    #[arg(long)]
    pub step_sigma_a: Option<f64>,
    #[arg(long)]
    pub beta_a1: Option<f64>,
    #[arg(long)]
    pub beta_a0: Option<f64>,
    #[arg(long)]
    pub alpha_loc: Option<f64>,
    #[arg(long)]
    pub alpha_scale: Option<f64>,
    #[arg(long)]
    pub sigma_a_loc: Option<f64>,
    #[arg(long)]
    pub sigma_a_scale: Option<f64>,
    #[arg(long)]
    pub sigma_p_loc: Option<f64>,
    #[arg(long)]
    pub sigma_p_scale: Option<f64>,
    /// Subjects with fewer trials are rejected.
    #[arg(long)]
    pub min_trials: Option<usize>,
    /// Number of prediction targets spanning each subject's data range.
    #[arg(long)]
    pub prediction_targets: Option<usize>,
    #[arg(long)]
    pub draws_per_target: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma_a: Option<f64>,
    /// Number of trials.
    #[arg(long)]
    pub n: Option<usize>,
    /// Lower end of the uniform target range.
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
    #[arg(long)]
    pub subject_id: Option<String>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct FeasibilityArgs {
    /// Cost exponent; with beta unset too, five exemplary cost functions are mapped.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub grid_lo: Option<f64>,
    #[arg(long)]
    pub grid_hi: Option<f64>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct CostSurfaceArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
    /// Points per axis, evenly spaced over [lo, hi].
    #[arg(long)]
    pub points: Option<usize>,
    /// Write ln(cost + 1e-9) instead of the cost.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub log_values: Option<bool>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct TrainArgs {
    /// 4 (sigma_p fixed) or 5 input features.
    #[arg(long)]
    pub features: Option<usize>,
    /// Training rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub val_split: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Output weight file.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Fresh oracle-labelled points.
    #[arg(long)]
    pub eval_n: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct InfoArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
}
