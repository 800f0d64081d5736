//! Random-walk Metropolis–Hastings over the subject parameters.
//!
//! Several short warm-up chains start from prior draws. The best state any of
//! them reaches seeds one long final chain, whose proposal scales are frozen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::aim::AimProvider;
use crate::dists::response_dist;
use crate::error::{domain, ensure_positive, Error, Result};
use crate::optimizer::SubjectParams;
use crate::stats::{kde_mode, mean, quantile, variance};
use crate::studies::Trial;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TARGET_ACCEPTANCE: f64 = 0.3;
const MAX_INIT_DRAWS: usize = 500;
const INIT_CANDIDATES: usize = 32;

pub const PARAM_NAMES: [&str; 4] = ["alpha", "beta", "sigma_p", "sigma_a"];

/// Log-normal prior given by its log-space location and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub location: f64,
    pub scale: f64,
}

impl LogNormalPrior {
    pub fn ln_pdf(&self, v: f64) -> f64 {
        if !(v > 0.0 && v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let z = (v.ln() - self.location) / self.scale;
        -0.5 * z * z - v.ln() - self.scale.ln() - LN_SQRT_2PI
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.location + self.scale * z).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Beta(a1, a0) on beta.
    pub beta_a1: f64,
    pub beta_a0: f64,
    pub alpha: LogNormalPrior,
    pub sigma_a: LogNormalPrior,
    /// Used only while sigma_p is inferred.
    pub sigma_p: Option<LogNormalPrior>,
    /// Holds sigma_p at this value instead of inferring it.
    pub fixed_sigma_p: Option<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            beta_a1: 10.0,
            beta_a0: 2.0,
            alpha: LogNormalPrior { location: 3.5, scale: 2f64.sqrt() },
            sigma_a: LogNormalPrior { location: 0.3f64.ln(), scale: 1.0 },
            sigma_p: Some(LogNormalPrior { location: 0.1f64.ln(), scale: 1.0 }),
            fixed_sigma_p: None,
        }
    }
}

impl PriorSpec {
    pub fn with_fixed_sigma_p(mut self, sigma_p: f64) -> Self {
        self.fixed_sigma_p = Some(sigma_p);
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("beta prior a1", self.beta_a1)?;
        ensure_positive("beta prior a0", self.beta_a0)?;
        ensure_positive("alpha prior scale", self.alpha.scale)?;
        ensure_positive("sigma_a prior scale", self.sigma_a.scale)?;
        for (name, loc) in [("alpha", self.alpha.location), ("sigma_a", self.sigma_a.location)] {
            if !loc.is_finite() {
                return Err(domain(format!("{name} prior location must be finite")));
            }
        }
        match (self.fixed_sigma_p, self.sigma_p) {
            (Some(v), _) => ensure_positive("fixed sigma_p", v),
            (None, Some(p)) if p.location.is_finite() => ensure_positive("sigma_p prior scale", p.scale),
            (None, Some(_)) => Err(domain("sigma_p prior location must be finite")),
            (None, None) => Err(domain("sigma_p is inferred but has no prior; fix it or give a prior")),
        }
    }

    fn beta_ln_pdf(&self, b: f64) -> f64 {
        if !(b > 0.0 && b < 1.0) {
            return f64::NEG_INFINITY;
        }
        (self.beta_a1 - 1.0) * b.ln() + (self.beta_a0 - 1.0) * (-b).ln_1p() - ln_beta(self.beta_a1, self.beta_a0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SubjectParams> {
        let beta = Beta::new(self.beta_a1, self.beta_a0)
            .map_err(|e| domain(format!("beta prior: {e}")))?
            .sample(rng);
        let alpha = self.alpha.draw(rng);
        let sigma_a = self.sigma_a.draw(rng);
        let (sigma_p, fixed) = match (self.fixed_sigma_p, self.sigma_p) {
            (Some(v), _) => (v, true),
            (None, Some(p)) => (p.draw(rng), false),
            (None, None) => return Err(domain("sigma_p has no prior")),
        };
        Ok(SubjectParams { alpha, beta, sigma_p, sigma_a, sigma_p_fixed: fixed })
    }
}

/// Sum of the component log-densities; `-inf` outside the support.
pub fn log_prior(theta: &SubjectParams, priors: &PriorSpec) -> f64 {
    let sp = match priors.fixed_sigma_p {
        Some(v) if theta.sigma_p == v => 0.0,
        Some(_) => f64::NEG_INFINITY,
        None => priors.sigma_p.map_or(f64::NEG_INFINITY, |p| p.ln_pdf(theta.sigma_p)),
    };
    let lp = priors.beta_ln_pdf(theta.beta) + priors.alpha.ln_pdf(theta.alpha) + priors.sigma_a.ln_pdf(theta.sigma_a) + sp;
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

pub fn validate_trials(trials: &[Trial]) -> Result<()> {
    if trials.is_empty() {
        return Err(domain("no trials"));
    }
    trials.iter().try_for_each(Trial::validate)
}

/// Log-likelihood of the responses around the provider's aim points; `-inf`
/// when the aim runs to a boundary.
///
/// Per-trial terms are summed in sorted order, so the value does not depend
/// on the order of `trials`.
pub fn log_likelihood<A: AimProvider + ?Sized>(trials: &[Trial], theta: &SubjectParams, aims: &A) -> Result<f64> {
    validate_trials(trials)?;
    let targets: Vec<f64> = trials.iter().map(|t| t.target).collect();
    let modes = match aims.aims(&targets, theta) {
        Ok(m) => m,
        Err(e) if e.is_boundary() => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    let mut terms = trials
        .iter()
        .zip(modes)
        .map(|(t, y)| response_dist(y, theta.sigma_a)?.log_pdf(t.response))
        .collect::<Result<Vec<f64>>>()?;
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum())
}

/// Unnormalized log-density the sampler explores.
pub trait LogTarget: Sync {
    fn log_density(&self, theta: &SubjectParams) -> Result<f64>;
    fn priors(&self) -> &PriorSpec;
}

pub struct Posterior<'a, A: ?Sized> {
    pub trials: &'a [Trial],
    pub priors: &'a PriorSpec,
    pub aims: &'a A,
}

impl<A: AimProvider + ?Sized> LogTarget for Posterior<'_, A> {
    fn log_density(&self, theta: &SubjectParams) -> Result<f64> {
        let lp = log_prior(theta, self.priors);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + log_likelihood(self.trials, theta, self.aims)?)
    }

    fn priors(&self) -> &PriorSpec {
        self.priors
    }
}

/// The prior alone (a flat likelihood).
pub struct PriorOnly<'a>(pub &'a PriorSpec);

impl LogTarget for PriorOnly<'_> {
    fn log_density(&self, theta: &SubjectParams) -> Result<f64> {
        Ok(log_prior(theta, self.0))
    }

    fn priors(&self) -> &PriorSpec {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub theta: SubjectParams,
    pub log_posterior: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_warmup_chains: usize,
    pub warmup_samples: usize,
    pub final_samples: usize,
    /// Proposal standard deviations for alpha, beta, sigma_p, sigma_a.
    pub step_sizes: [f64; 4],
    pub seed: u64,
    /// Tune proposal scales during warm-up.
    pub adapt: bool,
    /// Fraction of the final chain dropped before summarizing.
    pub burn_in_fraction: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_warmup_chains: 8,
            warmup_samples: 5000,
            final_samples: 20_000,
            step_sizes: [0.1, 0.02, 0.01, 0.01],
            seed: 0,
            adapt: true,
            burn_in_fraction: 0.0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_warmup_chains", self.n_warmup_chains),
            ("warmup_samples", self.warmup_samples),
            ("final_samples", self.final_samples),
        ] {
            if n == 0 {
                return Err(domain(format!("{name} must be at least 1")));
            }
        }
        for (name, s) in PARAM_NAMES.iter().zip(self.step_sizes) {
            ensure_positive(&format!("{name} step size"), s)?;
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(domain(format!("burn_in_fraction must lie in [0, 1), got {}", self.burn_in_fraction)));
        }
        Ok(())
    }
}

/// One Metropolis–Hastings transition with independent Gaussian proposals.
/// A zero step leaves that coordinate fixed.
pub fn mh_step<T, R>(state: &PosteriorSample, target: &T, steps: &[f64; 4], rng: &mut R) -> Result<PosteriorSample>
where
    T: LogTarget + ?Sized,
    R: Rng + ?Sized,
{
    let mut v = state.theta.to_array();
    for (vi, &s) in v.iter_mut().zip(steps) {
        if s > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            *vi += s * z;
        }
    }
    let proposal = SubjectParams::from_array(v, state.theta.sigma_p_fixed);
    let u: f64 = rng.random();
    let lp = target.log_density(&proposal)?;
    if lp.is_finite() && u.ln() < lp - state.log_posterior {
        Ok(PosteriorSample { theta: proposal, log_posterior: lp, accepted: true })
    } else {
        Ok(PosteriorSample { accepted: false, ..*state })
    }
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn effective_steps(base: &[f64; 4], fixed_sigma_p: bool) -> [f64; 4] {
    let mut s = *base;
    if fixed_sigma_p {
        s[2] = 0.0;
    }
    s
}

struct WarmupOutcome {
    best: PosteriorSample,
    steps: [f64; 4],
    acceptance: f64,
}

/// Best of the first `INIT_CANDIDATES` prior draws with finite density.
fn initial_state<T: LogTarget + ?Sized, R: Rng>(target: &T, rng: &mut R) -> Result<Option<PosteriorSample>> {
    let mut best: Option<PosteriorSample> = None;
    let mut found = 0;
    for _ in 0..MAX_INIT_DRAWS {
        let theta = target.priors().draw(rng)?;
        let lp = target.log_density(&theta)?;
        if lp.is_finite() {
            if best.is_none_or(|b| lp > b.log_posterior) {
                best = Some(PosteriorSample { theta, log_posterior: lp, accepted: true });
            }
            found += 1;
            if found == INIT_CANDIDATES {
                break;
            }
        }
    }
    Ok(best)
}

/// Robbins–Monro scaling of all steps towards the target acceptance. Halfway
/// through, the step proportions are reset from the chain's own spread.
fn warmup_chain<T: LogTarget + ?Sized>(target: &T, config: &ChainConfig, chain: usize) -> Result<Option<WarmupOutcome>> {
    let mut rng = chain_rng(config.seed, chain as u64 + 1);
    let Some(mut state) = initial_state(target, &mut rng)? else {
        return Ok(None);
    };
    let fixed = state.theta.sigma_p_fixed;
    let dim: f64 = if fixed { 3.0 } else { 4.0 };
    let mut base = effective_steps(&config.step_sizes, fixed);
    let mut log_scale = 0.0f64;
    let mut t0 = 0usize;
    let mut best = state;
    let mut accepted = 0usize;
    let mut history: Vec<[f64; 4]> = Vec::with_capacity(config.warmup_samples);
    let half = config.warmup_samples / 2;

    for i in 0..config.warmup_samples {
        if config.adapt && i == half && half >= 50 {
            let tail = &history[half / 2..];
            for (k, b) in base.iter_mut().enumerate() {
                let col: Vec<f64> = tail.iter().map(|v| v[k]).collect();
                let sd = variance(&col).sqrt();
                if *b > 0.0 && sd > 0.0 && sd.is_finite() {
                    *b = 2.38 * sd / dim.sqrt();
                }
            }
            log_scale = 0.0;
            t0 = i;
        }
        let steps = base.map(|b| b * log_scale.exp());
        state = mh_step(&state, target, &steps, &mut rng)?;
        if state.accepted {
            accepted += 1;
        }
        if config.adapt {
            let gain = ((i - t0 + 1) as f64).powf(-0.6);
            let a = if state.accepted { 1.0 } else { 0.0 };
            log_scale = (log_scale + gain * (a - TARGET_ACCEPTANCE)).clamp(-12.0, 12.0);
        }
        if state.log_posterior > best.log_posterior {
            best = state;
        }
        history.push(state.theta.to_array());
    }
    Ok(Some(WarmupOutcome {
        best,
        steps: base.map(|b| b * log_scale.exp()),
        acceptance: accepted as f64 / config.warmup_samples as f64,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    /// Kernel-density mode.
    pub mode: f64,
    pub mean: f64,
    pub sd: f64,
    /// Central 90% interval.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    /// Highest-posterior sample of the final chain.
    pub map: SubjectParams,
    pub map_log_posterior: f64,
    pub acceptance_rate: f64,
    pub warmup_acceptance: Vec<f64>,
    pub warmup_best_log_posterior: f64,
    pub failed_warmup_chains: usize,
    pub step_sizes: [f64; 4],
    pub n_samples: usize,
}

impl PosteriorSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub samples: Vec<PosteriorSample>,
    pub summary: PosteriorSummary,
}

fn summarize_param(name: &str, xs: &[f64]) -> Result<ParamSummary> {
    Ok(ParamSummary {
        name: name.into(),
        mode: kde_mode(xs)?,
        mean: mean(xs),
        sd: if xs.len() > 1 { variance(xs).sqrt() } else { 0.0 },
        lower: quantile(xs, 0.05)?,
        upper: quantile(xs, 0.95)?,
    })
}

/// Warm-up chains, then the final chain from the best warm-up state.
pub fn run_chains<T: LogTarget + ?Sized>(target: &T, config: &ChainConfig) -> Result<Inference> {
    config.validate()?;
    target.priors().validate()?;
    let outcomes = (0..config.n_warmup_chains)
        .into_par_iter()
        .map(|k| warmup_chain(target, config, k))
        .collect::<Result<Vec<_>>>()?;
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    let warmup_acceptance: Vec<f64> = outcomes.iter().flatten().map(|o| o.acceptance).collect();
    let Some(start) = outcomes
        .into_iter()
        .flatten()
        .max_by(|a, b| a.best.log_posterior.total_cmp(&b.best.log_posterior))
    else {
        return Err(Error::Inference(format!(
            "none of {} warm-up chains found finite posterior mass in {MAX_INIT_DRAWS} prior draws each; \
             check the data scale and the priors",
            config.n_warmup_chains
        )));
    };

    let mut rng = chain_rng(config.seed, 0);
    let mut state = PosteriorSample { accepted: true, ..start.best };
    let mut samples = Vec::with_capacity(config.final_samples);
    for _ in 0..config.final_samples {
        state = mh_step(&state, target, &start.steps, &mut rng)?;
        samples.push(state);
    }
    let kept = &samples[(config.burn_in_fraction * samples.len() as f64) as usize..];
    let acceptance_rate = samples.iter().filter(|s| s.accepted).count() as f64 / samples.len() as f64;
    let map = kept.iter().max_by(|a, b| a.log_posterior.total_cmp(&b.log_posterior)).expect("non-empty chain");

    let mut params = Vec::new();
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        if k == 2 && state.theta.sigma_p_fixed {
            continue;
        }
        let col: Vec<f64> = kept.iter().map(|s| s.theta.to_array()[k]).collect();
        params.push(summarize_param(name, &col)?);
    }
    let summary = PosteriorSummary {
        params,
        map: map.theta,
        map_log_posterior: map.log_posterior,
        acceptance_rate,
        warmup_acceptance,
        warmup_best_log_posterior: start.best.log_posterior,
        failed_warmup_chains: failed,
        step_sizes: start.steps,
        n_samples: kept.len(),
    };
    Ok(Inference { samples, summary })
}

pub fn run_inference<A: AimProvider + ?Sized>(
    trials: &[Trial],
    priors: &PriorSpec,
    config: &ChainConfig,
    aims: &A,
) -> Result<Inference> {
    validate_trials(trials)?;
    run_chains(&Posterior { trials, priors, aims }, config)
}
