use std::path::{Path, PathBuf};

use prodrep::aim::{AimProvider, ExactAim, InterpolatedAim};
use prodrep::cost::{cost_surface, CostParams};
use prodrep::io;
use prodrep::mcmc::{run_inference, ChainConfig, LogNormalPrior, PosteriorSummary, PriorSpec};
use prodrep::optimizer::{QuadratureSpec, SubjectParams};
use prodrep::studies::{
    default_cost_columns, feasibility_map, log_grid, predictive_boxstats, simulate_trials, uniform_targets,
    DEFAULT_TILE_POINTS, DEFAULT_TILE_RANGE,
};
use prodrep::surrogate::{evaluate, generate_training_set, train, FeatureSpace, SurrogateNet, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{write_effective, Config};
use crate::CliError;

/// Held-out MAE above which training and evaluation print a warning.
const MAE_WARN_4: f64 = 0.08;
const MAE_WARN_5: f64 = 0.10;

fn out_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn quad(cfg: &Config, default_nodes: usize) -> Result<QuadratureSpec, CliError> {
    Ok(QuadratureSpec::new(cfg.quad_nodes.unwrap_or(default_nodes), cfg.quad_sigmas.unwrap_or(6.0))?)
}

/// Loads a surrogate and reconciles its fixed sigma_p with the requested one.
fn load_surrogate(path: &Path, sigma_p: Option<f64>) -> Result<(SurrogateNet, Option<f64>), CliError> {
    let net = SurrogateNet::load(path)?;
    let sp = match (net.space.fixed_sigma_p, sigma_p) {
        (Some(fixed), Some(req)) if fixed != req => {
            return Err(CliError::Usage(format!(
                "surrogate {} was trained with sigma_p = {fixed}, but sigma_p = {req} was requested",
                path.display()
            )))
        }
        (Some(fixed), _) => Some(fixed),
        (None, req) => req,
    };
    Ok((net, sp))
}

enum Aims {
    Exact(ExactAim),
    Curve(InterpolatedAim),
    Net(Box<SurrogateNet>),
}

impl Aims {
    fn provider(&self) -> &dyn AimProvider {
        match self {
            Aims::Exact(a) => a,
            Aims::Curve(a) => a,
            Aims::Net(n) => n.as_ref(),
        }
    }
}

#[derive(Serialize)]
struct FitSettings {
    data: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    sigma_p: Option<f64>,
    surrogate: Option<PathBuf>,
    quad_nodes: usize,
    quad_sigmas: f64,
    aim_grid: usize,
    chains: usize,
    warmup: usize,
    samples: usize,
    burn_in: f64,
    adapt: bool,
    step_alpha: f64,
    step_beta: f64,
    step_sigma_p: f64,
    step_sigma_a: f64,
    beta_a1: f64,
    beta_a0: f64,
    alpha_loc: f64,
    alpha_scale: f64,
    sigma_a_loc: f64,
    sigma_a_scale: f64,
    sigma_p_loc: f64,
    sigma_p_scale: f64,
    min_trials: usize,
    prediction_targets: usize,
    draws_per_target: usize,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    subject: &'a str,
    trials: usize,
    aim_source: String,
    fixed_sigma_p: Option<f64>,
    #[serde(flatten)]
    posterior: &'a PosteriorSummary,
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn fit(cfg: &Config) -> Result<(), CliError> {
    let data = cfg.data.clone().ok_or_else(|| CliError::missing("fit", "data"))?;
    let dir = out_dir(cfg)?;
    let defaults = (PriorSpec::default(), ChainConfig::default());
    let (dp, dc) = &defaults;
    let dsp = dp.sigma_p.expect("default sigma_p prior");

    let (aims, sigma_p) = match &cfg.surrogate {
        Some(p) => {
            let (net, sp) = load_surrogate(p, cfg.sigma_p)?;
            (Aims::Net(Box::new(net)), sp)
        }
        None => {
            let q = quad(cfg, 24)?;
            (Aims::Curve(InterpolatedAim { quad: q, grid_size: cfg.aim_grid.unwrap_or(12) }), cfg.sigma_p)
        }
    };
    let q = match &aims {
        Aims::Curve(c) => c.quad,
        _ => quad(cfg, 24)?,
    };
    let s = FitSettings {
        data: data.clone(),
        out_dir: dir.clone(),
        seed: cfg.seed.unwrap_or(0),
        sigma_p,
        surrogate: cfg.surrogate.clone(),
        quad_nodes: q.nodes_per_axis,
        quad_sigmas: q.log_range_sigmas,
        aim_grid: cfg.aim_grid.unwrap_or(12),
        chains: cfg.chains.unwrap_or(dc.n_warmup_chains),
        warmup: cfg.warmup.unwrap_or(dc.warmup_samples),
        samples: cfg.samples.unwrap_or(dc.final_samples),
        burn_in: cfg.burn_in.unwrap_or(dc.burn_in_fraction),
        adapt: cfg.adapt.unwrap_or(dc.adapt),
        step_alpha: cfg.step_alpha.unwrap_or(dc.step_sizes[0]),
        step_beta: cfg.step_beta.unwrap_or(dc.step_sizes[1]),
        step_sigma_p: cfg.step_sigma_p.unwrap_or(dc.step_sizes[2]),
        step_sigma_a: cfg.step_sigma_a.unwrap_or(dc.step_sizes[3]),
        beta_a1: cfg.beta_a1.unwrap_or(dp.beta_a1),
        beta_a0: cfg.beta_a0.unwrap_or(dp.beta_a0),
        alpha_loc: cfg.alpha_loc.unwrap_or(dp.alpha.location),
        alpha_scale: cfg.alpha_scale.unwrap_or(dp.alpha.scale),
        sigma_a_loc: cfg.sigma_a_loc.unwrap_or(dp.sigma_a.location),
        sigma_a_scale: cfg.sigma_a_scale.unwrap_or(dp.sigma_a.scale),
        sigma_p_loc: cfg.sigma_p_loc.unwrap_or(dsp.location),
        sigma_p_scale: cfg.sigma_p_scale.unwrap_or(dsp.scale),
        min_trials: cfg.min_trials.unwrap_or(10),
        prediction_targets: cfg.prediction_targets.unwrap_or(10),
        draws_per_target: cfg.draws_per_target.unwrap_or(10_000),
    };
    let priors = PriorSpec {
        beta_a1: s.beta_a1,
        beta_a0: s.beta_a0,
        alpha: LogNormalPrior { location: s.alpha_loc, scale: s.alpha_scale },
        sigma_a: LogNormalPrior { location: s.sigma_a_loc, scale: s.sigma_a_scale },
        sigma_p: Some(LogNormalPrior { location: s.sigma_p_loc, scale: s.sigma_p_scale }),
        fixed_sigma_p: s.sigma_p,
    };
    priors.validate()?;
    let chain = ChainConfig {
        n_warmup_chains: s.chains,
        warmup_samples: s.warmup,
        final_samples: s.samples,
        step_sizes: [s.step_alpha, s.step_beta, s.step_sigma_p, s.step_sigma_a],
        seed: s.seed,
        adapt: s.adapt,
        burn_in_fraction: s.burn_in,
    };
    chain.validate()?;
    if s.prediction_targets == 0 {
        return Err(CliError::Usage("prediction_targets must be at least 1".into()));
    }

    let subjects = io::split_subjects(io::read_trials(&data)?);
    for (id, trials) in &subjects {
        if trials.len() < s.min_trials {
            return Err(CliError::Usage(format!(
                "subject {id:?} has {} trials; at least {} are required",
                trials.len(),
                s.min_trials
            )));
        }
    }
    write_effective(&dir, "fit", &s)?;

    let provider = aims.provider();
    let results: Vec<Result<String, CliError>> = subjects
        .par_iter()
        .enumerate()
        .map(|(i, (id, trials))| {
            let cfg_i = ChainConfig { seed: s.seed.wrapping_add(i as u64), ..chain.clone() };
            let run = run_inference(trials, &priors, &cfg_i, provider)?;
            let sub = dir.join(file_safe(id));
            std::fs::create_dir_all(&sub)?;
            io::write_posterior(&sub.join("posterior.csv"), &run.samples)?;
            let summary = FitSummary {
                subject: id,
                trials: trials.len(),
                aim_source: provider.describe(),
                fixed_sigma_p: s.sigma_p,
                posterior: &run.summary,
            };
            io::write_json(&sub.join("summary.json"), &summary)?;

            let (lo, hi) = trials
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(t.target), hi.max(t.target)));
            let targets = log_grid(lo, hi, s.prediction_targets)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg_i.seed);
            rng.set_stream(u64::MAX);
            let boxes = predictive_boxstats(&run.summary.map, &targets, s.draws_per_target, provider, &mut rng)?;
            io::write_boxstats(&sub.join("predictions.csv"), &boxes)?;

            let mut line = format!("{id}: {} trials", trials.len());
            for p in &run.summary.params {
                line += &format!(", {} mode {:.4} [{:.4}, {:.4}]", p.name, p.mode, p.lower, p.upper);
            }
            line += &format!(", acceptance {:.2}", run.summary.acceptance_rate);
            Ok(line)
        })
        .collect();
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSettings {
    out_dir: PathBuf,
    seed: u64,
    alpha: f64,
    beta: f64,
    sigma_p: f64,
    sigma_a: f64,
    n: usize,
    lo: f64,
    hi: f64,
    subject_id: Option<String>,
    surrogate: Option<PathBuf>,
    quad_nodes: usize,
    quad_sigmas: f64,
}

pub fn simulate(cfg: &Config) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let q = quad(cfg, 96)?;
    let (aims, sigma_p) = match &cfg.surrogate {
        Some(p) => {
            let (net, sp) = load_surrogate(p, cfg.sigma_p)?;
            (Aims::Net(Box::new(net)), sp)
        }
        None => (Aims::Exact(ExactAim { quad: q }), cfg.sigma_p),
    };
    let s = SimulateSettings {
        out_dir: dir.clone(),
        seed: cfg.seed.unwrap_or(0),
        alpha: cfg.alpha.unwrap_or(0.5),
        beta: cfg.beta.unwrap_or(0.95),
        sigma_p: sigma_p.unwrap_or(0.05),
        sigma_a: cfg.sigma_a.unwrap_or(0.3),
        n: cfg.n.unwrap_or(200),
        lo: cfg.lo.unwrap_or(1.2),
        hi: cfg.hi.unwrap_or(4.8),
        subject_id: cfg.subject_id.clone(),
        surrogate: cfg.surrogate.clone(),
        quad_nodes: q.nodes_per_axis,
        quad_sigmas: q.log_range_sigmas,
    };
    let theta = SubjectParams::new(s.alpha, s.beta, s.sigma_p, s.sigma_a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let targets = uniform_targets(s.n, s.lo, s.hi, &mut rng)?;
    let mut trials = simulate_trials(&targets, &theta, aims.provider(), &mut rng)?;
    if let Some(id) = &s.subject_id {
        for t in &mut trials {
            t.subject_id = Some(id.clone());
        }
    }
    let path = dir.join("trials.csv");
    io::write_trials(&path, &trials)?;
    write_effective(&dir, "simulate", &s)?;
    println!("wrote {} trials to {}", trials.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct FeasibilitySettings {
    out_dir: PathBuf,
    costs: Vec<CostParams>,
    target: f64,
    grid_points: usize,
    grid_lo: f64,
    grid_hi: f64,
    surrogate: Option<PathBuf>,
    quad_nodes: usize,
    quad_sigmas: f64,
}

pub fn feasibility(cfg: &Config) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let q = quad(cfg, 96)?;
    let aims = match &cfg.surrogate {
        Some(p) => Aims::Net(Box::new(SurrogateNet::load(p)?)),
        None => Aims::Exact(ExactAim { quad: q }),
    };
    let costs = match (cfg.alpha, cfg.beta) {
        (Some(alpha), Some(beta)) => vec![CostParams::new(alpha, beta)?],
        (None, None) => default_cost_columns(),
        _ => return Err(CliError::Usage("give both alpha and beta, or neither for the five default cost functions".into())),
    };
    let s = FeasibilitySettings {
        out_dir: dir.clone(),
        costs,
        target: cfg.target.unwrap_or(1.0),
        grid_points: cfg.grid_points.unwrap_or(DEFAULT_TILE_POINTS),
        grid_lo: cfg.grid_lo.unwrap_or(DEFAULT_TILE_RANGE.0),
        grid_hi: cfg.grid_hi.unwrap_or(DEFAULT_TILE_RANGE.1),
        surrogate: cfg.surrogate.clone(),
        quad_nodes: q.nodes_per_axis,
        quad_sigmas: q.log_range_sigmas,
    };
    let grid = log_grid(s.grid_lo, s.grid_hi, s.grid_points)?;
    let provider = aims.provider();
    for (k, cost) in s.costs.iter().enumerate() {
        let map = feasibility_map(&grid, &grid, cost, s.target, provider)?;
        let name = if s.costs.len() == 1 {
            "tilemap.csv".to_string()
        } else {
            format!("tilemap_{}_a{}_b{}.csv", k + 1, cost.alpha, cost.beta)
        };
        let path = dir.join(name);
        io::write_tilemap(&path, &map, &provider.describe())?;
        println!("wrote {} ({} boundary cells)", path.display(), map.missing());
    }
    write_effective(&dir, "feasibility", &s)?;
    Ok(())
}

#[derive(Serialize)]
struct SurfaceSettings {
    out_dir: PathBuf,
    alpha: f64,
    beta: f64,
    lo: f64,
    hi: f64,
    points: usize,
    log_values: bool,
}

#[derive(Serialize)]
struct SurfaceMeta {
    alpha: f64,
    beta: f64,
    log_values: bool,
    epsilon: f64,
    layout: &'static str,
}

pub fn cost_surface_cmd(cfg: &Config) -> Result<(), CliError> {
    let alpha = cfg.alpha.ok_or_else(|| CliError::missing("cost-surface", "alpha"))?;
    let beta = cfg.beta.ok_or_else(|| CliError::missing("cost-surface", "beta"))?;
    let dir = out_dir(cfg)?;
    let s = SurfaceSettings {
        out_dir: dir.clone(),
        alpha,
        beta,
        lo: cfg.lo.unwrap_or(0.05),
        hi: cfg.hi.unwrap_or(5.0),
        points: cfg.points.unwrap_or(100),
        log_values: cfg.log_values.unwrap_or(false),
    };
    if s.points < 2 || !(s.hi > s.lo) {
        return Err(CliError::Usage("cost surface needs points >= 2 and lo < hi".into()));
    }
    let grid: Vec<f64> =
        (0..s.points).map(|i| s.lo + (s.hi - s.lo) * i as f64 / (s.points - 1) as f64).collect();
    let p = CostParams::new(alpha, beta)?;
    let values = cost_surface(&grid, &grid, &p, s.log_values)?;
    let path = dir.join("surface.csv");
    io::write_surface(&path, &grid, &grid, &values)?;
    io::write_json(
        &dir.join("surface.meta.json"),
        &SurfaceMeta {
            alpha,
            beta,
            log_values: s.log_values,
            epsilon: prodrep::cost::LOG_SURFACE_EPS,
            layout: "rows: target, columns: action",
        },
    )?;
    write_effective(&dir, "cost-surface", &s)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSettings {
    out_dir: PathBuf,
    weights: PathBuf,
    seed: u64,
    features: usize,
    sigma_p: Option<f64>,
    n: usize,
    epochs: usize,
    val_split: f64,
    batch_size: usize,
    learning_rate: f64,
    patience: usize,
    quad_nodes: usize,
    quad_sigmas: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    rows: usize,
    rejected: usize,
    train_rows: usize,
    val_rows: usize,
    stop_epoch: usize,
    best_epoch: usize,
    early_stopped: bool,
    val_mae: f64,
}

fn space_for(features: usize, sigma_p: Option<f64>) -> Result<FeatureSpace, CliError> {
    match (features, sigma_p) {
        (4, Some(sp)) => Ok(FeatureSpace::four(sp)),
        (4, None) => Err(CliError::Usage("a 4-feature surrogate needs sigma_p".into())),
        (5, None) => Ok(FeatureSpace::five()),
        (5, Some(_)) => Err(CliError::Usage("a 5-feature surrogate takes sigma_p as an input; drop sigma_p".into())),
        (f, _) => Err(CliError::Usage(format!("features must be 4 or 5, got {f}"))),
    }
}

pub fn surrogate_train(cfg: &Config) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let features = cfg.features.unwrap_or(4);
    let sigma_p = if features == 4 { Some(cfg.sigma_p.unwrap_or(0.05)) } else { cfg.sigma_p };
    let space = space_for(features, sigma_p)?;
    let q = quad(cfg, 96)?;
    let d = TrainConfig::default();
    let s = TrainSettings {
        out_dir: dir.clone(),
        weights: cfg.weights.clone().unwrap_or_else(|| dir.join("surrogate.json")),
        seed: cfg.seed.unwrap_or(0),
        features,
        sigma_p,
        n: cfg.n.unwrap_or(if features == 4 { 18_910 } else { 123_752 }),
        epochs: cfg.epochs.unwrap_or(if features == 4 { 200 } else { 600 }),
        val_split: cfg.val_split.unwrap_or(d.val_split),
        batch_size: cfg.batch_size.unwrap_or(d.batch_size),
        learning_rate: cfg.learning_rate.unwrap_or(d.learning_rate),
        patience: cfg.patience.unwrap_or(d.patience),
        quad_nodes: q.nodes_per_axis,
        quad_sigmas: q.log_range_sigmas,
    };
    write_effective(&dir, "surrogate-train", &s)?;
    let data = generate_training_set(s.n, &space, &q, s.seed)?;
    let tc = TrainConfig {
        epochs: s.epochs,
        val_split: s.val_split,
        batch_size: s.batch_size,
        learning_rate: s.learning_rate,
        patience: s.patience,
        seed: s.seed.wrapping_add(1),
    };
    let (net, report) = train(&data, &tc)?;
    net.save(&s.weights)?;
    io::write_training_history(&dir.join("training_history.csv"), &report.history)?;
    io::write_json(
        &dir.join("training_report.json"),
        &TrainSummary {
            rows: data.len(),
            rejected: data.rejected,
            train_rows: report.train_rows,
            val_rows: report.val_rows,
            stop_epoch: report.stop_epoch,
            best_epoch: report.best_epoch,
            early_stopped: report.early_stopped,
            val_mae: report.val_mae,
        },
    )?;
    println!(
        "trained on {} rows ({} boundary draws resampled); stopped at epoch {}, kept epoch {}; held-out MAE {:.4}",
        data.len(),
        data.rejected,
        report.stop_epoch,
        report.best_epoch,
        report.val_mae
    );
    warn_mae(features, report.val_mae);
    println!("wrote {}", s.weights.display());
    Ok(())
}

fn warn_mae(features: usize, mae: f64) {
    let limit = if features == 4 { MAE_WARN_4 } else { MAE_WARN_5 };
    if mae > limit {
        eprintln!("warning: MAE {mae:.4} is above {limit} for a {features}-feature surrogate");
    }
}

#[derive(Serialize)]
struct EvalSettings {
    out_dir: PathBuf,
    weights: PathBuf,
    seed: u64,
    eval_n: usize,
    quad_nodes: usize,
    quad_sigmas: f64,
}

#[derive(Serialize)]
struct EvalSummary {
    points: usize,
    rejected: usize,
    mae: f64,
    p95_abs_error: f64,
}

fn weights_path(cfg: &Config, cmd: &str) -> Result<PathBuf, CliError> {
    cfg.weights.clone().or_else(|| cfg.surrogate.clone()).ok_or_else(|| CliError::missing(cmd, "weights"))
}

pub fn surrogate_eval(cfg: &Config) -> Result<(), CliError> {
    let weights = weights_path(cfg, "surrogate eval")?;
    let dir = out_dir(cfg)?;
    let q = quad(cfg, 96)?;
    let s = EvalSettings {
        out_dir: dir.clone(),
        weights,
        seed: cfg.seed.unwrap_or(0).wrapping_add(0x5eed),
        eval_n: cfg.eval_n.unwrap_or(1000),
        quad_nodes: q.nodes_per_axis,
        quad_sigmas: q.log_range_sigmas,
    };
    let net = SurrogateNet::load(&s.weights)?;
    let data = generate_training_set(s.eval_n, &net.space, &q, s.seed)?;
    let report = evaluate(&net, &data)?;
    io::write_eval_errors(&dir.join("eval_errors.csv"), &data, &report)?;
    io::write_json(
        &dir.join("eval_report.json"),
        &EvalSummary { points: data.len(), rejected: data.rejected, mae: report.mae, p95_abs_error: report.p95_abs_error },
    )?;
    write_effective(&dir, "surrogate-eval", &s)?;
    println!("{} fresh points: MAE {:.4}, 95th percentile {:.4}", data.len(), report.mae, report.p95_abs_error);
    warn_mae(net.input_dim(), report.mae);
    Ok(())
}

pub fn surrogate_info(cfg: &Config) -> Result<(), CliError> {
    let weights = weights_path(cfg, "surrogate info")?;
    let net = SurrogateNet::load(&weights)?;
    net.audit()?;
    println!("{}", weights.display());
    println!("{}", net.describe());
    let mut width = net.input_dim();
    println!("  input        {width} units");
    for (i, layer) in net.layers.iter().enumerate() {
        let (out, inp) = layer.weights.dim();
        println!("  layer {}      {inp} -> {out}, {}", i + 1, layer.activation.tag());
        width = out;
    }
    println!("  output       {width} unit");
    for r in &net.space.ranges {
        println!("  range {:<8} [{}, {}]", r.name, r.min, r.max);
    }
    println!("architecture audit: ok");
    Ok(())
}
