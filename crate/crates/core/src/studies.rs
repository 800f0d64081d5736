//! Experiment-level procedures: synthetic trials, feasibility tile maps over
//! (sigma_a, sigma_p), and posterior-predictive box statistics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aim::AimProvider;
use crate::cost::CostParams;
use crate::dists::response_dist;
use crate::error::{domain, ensure_positive, Result};
use crate::optimizer::SubjectParams;
use crate::stats::{box_stats, BoxStats};

/// One (target, response) pair in positive task units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub target: f64,
    pub response: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
}

impl Trial {
    pub fn new(target: f64, response: f64) -> Result<Self> {
        let t = Self { target, response, subject_id: None };
        t.validate()?;
        Ok(t)
    }

    pub fn with_subject(mut self, id: impl Into<String>) -> Self {
        self.subject_id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("target", self.target)?;
        ensure_positive("response", self.response)
    }
}

pub fn uniform_targets<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(domain("need at least one target"));
    }
    ensure_positive("lo", lo)?;
    if !(hi.is_finite() && hi > lo) {
        return Err(domain(format!("target range must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    Ok((0..n).map(|_| rng.random_range(lo..=hi)).collect())
}

/// `n` log-spaced points over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    ensure_positive("lo", lo)?;
    if !(hi.is_finite() && hi >= lo) || n == 0 {
        return Err(domain(format!("invalid grid [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}

/// Draws one response per target around the provider's aim point.
pub fn simulate_trials<A, R>(targets: &[f64], theta: &SubjectParams, aims: &A, rng: &mut R) -> Result<Vec<Trial>>
where
    A: AimProvider + ?Sized,
    R: Rng + ?Sized,
{
    theta.validate()?;
    for &x in targets {
        ensure_positive("target", x)?;
    }
    let modes = aims.aims(targets, theta)?;
    targets
        .iter()
        .zip(modes)
        .map(|(&x, y)| {
            let d = response_dist(y, theta.sigma_a)?;
            Trial::new(x, d.draw(rng))
        })
        .collect()
}

/// Signed aim deviation in percent of the target over a (sigma_a, sigma_p) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMap {
    pub sigma_a_grid: Vec<f64>,
    pub sigma_p_grid: Vec<f64>,
    /// `deviation[i][j]` belongs to `sigma_a_grid[i]`, `sigma_p_grid[j]`; `None`
    /// where the optimum runs to a boundary.
    pub deviation: Vec<Vec<Option<f64>>>,
    pub cost: CostParams,
    pub target: f64,
}

impl TileMap {
    pub fn missing(&self) -> usize {
        self.deviation.iter().flatten().filter(|d| d.is_none()).count()
    }
}

pub const DEFAULT_TILE_POINTS: usize = 24;
pub const DEFAULT_TILE_RANGE: (f64, f64) = (0.05, 0.5);

/// Five exemplary cost functions: three task-dominated shapes and two
/// effort-heavy ones.
pub fn default_cost_columns() -> Vec<CostParams> {
    [(0.5, 0.99), (1.0, 0.99), (2.0, 0.99), (2.0, 0.8), (1.0, 0.7)]
        .into_iter()
        .map(|(a, b)| CostParams { alpha: a, beta: b })
        .collect()
}

pub fn feasibility_map<A: AimProvider + ?Sized>(
    sigma_a_grid: &[f64],
    sigma_p_grid: &[f64],
    cost: &CostParams,
    x: f64,
    aims: &A,
) -> Result<TileMap> {
    ensure_positive("target", x)?;
    for (name, grid) in [("sigma_a", sigma_a_grid), ("sigma_p", sigma_p_grid)] {
        if grid.is_empty() {
            return Err(domain(format!("{name} grid is empty")));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain(format!("{name} grid must be strictly increasing")));
        }
        for &s in grid {
            ensure_positive(name, s)?;
        }
    }
    let cells: Vec<(usize, usize)> =
        (0..sigma_a_grid.len()).flat_map(|i| (0..sigma_p_grid.len()).map(move |j| (i, j))).collect();
    let values = cells
        .par_iter()
        .map(|&(i, j)| {
            let theta = SubjectParams::new(cost.alpha, cost.beta, sigma_p_grid[j], sigma_a_grid[i])?;
            match aims.aim(x, &theta) {
                Ok(y) => Ok(Some(100.0 * (y - x) / x)),
                Err(e) if e.is_boundary() => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let deviation = values.chunks(sigma_p_grid.len()).map(<[_]>::to_vec).collect();
    Ok(TileMap {
        sigma_a_grid: sigma_a_grid.to_vec(),
        sigma_p_grid: sigma_p_grid.to_vec(),
        deviation,
        cost: *cost,
        target: x,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetBox {
    pub target: f64,
    pub aim: f64,
    #[serde(flatten)]
    pub stats: BoxStats,
}

/// Simulated response box statistics per target.
pub fn predictive_boxstats<A, R>(
    theta: &SubjectParams,
    targets: &[f64],
    n_per_target: usize,
    aims: &A,
    rng: &mut R,
) -> Result<Vec<TargetBox>>
where
    A: AimProvider + ?Sized,
    R: Rng + ?Sized,
{
    if n_per_target < 100 {
        return Err(domain(format!("need at least 100 draws per target, got {n_per_target}")));
    }
    if targets.is_empty() {
        return Err(domain("no targets given"));
    }
    theta.validate()?;
    let modes = aims.aims(targets, theta)?;
    targets
        .iter()
        .zip(modes)
        .map(|(&target, aim)| {
            let draws = response_dist(aim, theta.sigma_a)?.sample(rng, n_per_target)?;
            Ok(TargetBox { target, aim, stats: box_stats(&draws)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aim::ExactAim;
    use crate::stats::ks_statistic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct FixedRatio(f64);

    impl AimProvider for FixedRatio {
        fn aims(&self, targets: &[f64], _: &SubjectParams) -> Result<Vec<f64>> {
            Ok(targets.iter().map(|x| x * self.0).collect())
        }
        fn describe(&self) -> String {
            "fixed ratio".into()
        }
    }

    #[test]
    fn uniform_targets_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = uniform_targets(200, 1.2, 4.8, &mut rng).unwrap();
        assert!(t.iter().all(|&x| (1.2..=4.8).contains(&x)));
        let bound = 3.0 / 200f64.sqrt() * 3.6 / 12f64.sqrt();
        assert!((crate::stats::mean(&t) - 3.0).abs() < bound);
        assert_eq!(uniform_targets(1, 1.0, 2.0, &mut rng).unwrap().len(), 1);
        assert!(uniform_targets(5, 2.0, 2.0, &mut rng).is_err());
        assert!(uniform_targets(5, 0.0, 2.0, &mut rng).is_err());
    }

    #[test]
    fn log_residuals_follow_the_response_model() {
        let theta = SubjectParams::new(0.5, 0.95, 0.05, 0.3).unwrap();
        let aims = ExactAim::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let targets = uniform_targets(200, 1.2, 4.8, &mut rng).unwrap();
        let trials = simulate_trials(&targets, &theta, &aims, &mut rng).unwrap();
        let modes = aims.aims(&targets, &theta).unwrap();
        let resid: Vec<f64> = trials.iter().zip(&modes).map(|(t, y)| (t.response / y).ln()).collect();
        let (m, s) = (0.09, 0.3);
        let cdf = |r: f64| 0.5 * statrs::function::erf::erfc(-(r - m) / (s * std::f64::consts::SQRT_2));
        assert!(ks_statistic(&resid, cdf).unwrap() < 0.08);
    }

    #[test]
    fn simulation_is_deterministic_and_collapses_without_noise() {
        let theta = SubjectParams::new(0.5, 0.95, 0.05, 1e-4).unwrap();
        let targets = [1.0, 2.0, 3.0];
        let run = |seed| simulate_trials(&targets, &theta, &FixedRatio(0.9), &mut ChaCha8Rng::seed_from_u64(seed));
        let a = run(3).unwrap();
        assert_eq!(a, run(3).unwrap());
        for t in &a {
            assert!((t.response / (0.9 * t.target) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn trial_validation() {
        assert!(Trial::new(1.0, -0.5).is_err());
        assert!(Trial::new(f64::NAN, 1.0).is_err());
        assert_eq!(Trial::new(1.0, 2.0).unwrap().with_subject("s1").subject_id.as_deref(), Some("s1"));
    }

    #[test]
    fn undershoot_grows_with_action_variability() {
        let grid = log_grid(0.05, 0.5, 8).unwrap();
        let cost = CostParams { alpha: 2.0, beta: 0.99 };
        let map = feasibility_map(&grid, &[0.05], &cost, 1.0, &ExactAim::default()).unwrap();
        let col: Vec<f64> = map.deviation.iter().map(|r| r[0].unwrap()).collect();
        assert!(col.windows(2).all(|w| w[1] < w[0]), "{col:?}");
        assert!(*col.last().unwrap() < 0.0);
    }

    #[test]
    fn perceptual_noise_can_cause_overshoot() {
        let grid = log_grid(0.05, 0.5, 8).unwrap();
        let cost = CostParams { alpha: 3.0, beta: 0.99 };
        let map = feasibility_map(&[0.05], &grid, &cost, 1.0, &ExactAim::default()).unwrap();
        let row: Vec<f64> = map.deviation[0].iter().map(|d| d.unwrap()).collect();
        assert!(row.windows(2).all(|w| w[1] > w[0]), "{row:?}");
        assert!(*row.last().unwrap() > 0.0);
    }

    #[test]
    fn noiseless_effortless_limit_has_no_deviation() {
        let dev = |alpha| {
            let cost = CostParams { alpha, beta: 0.999 };
            feasibility_map(&[1e-3], &[1e-3], &cost, 1.0, &ExactAim::default()).unwrap().deviation[0][0].unwrap()
        };
        for alpha in [0.5, 1.0, 1.5, 2.0] {
            let d = dev(alpha);
            assert!(d.abs() < 0.5, "alpha {alpha}: {d}");
        }
        // a flat task cost lets the small effort weight pull the aim down:
        // alpha * beta * d^(alpha - 1) = 1 - beta
        let d: f64 = dev(4.0);
        let shift = -100.0 * (0.001f64 / (4.0 * 0.999)).cbrt();
        assert!((d / shift - 1.0).abs() < 0.05, "{d} vs {shift}");
    }

    #[test]
    fn effort_heavy_cells_are_missing_not_fabricated() {
        let cost = CostParams { alpha: 0.5, beta: 0.6 };
        let map = feasibility_map(&[0.3], &[0.05], &cost, 4.0, &ExactAim::default()).unwrap();
        assert_eq!(map.missing(), 1);
    }

    #[test]
    fn box_median_matches_lognormal_median() {
        let theta = SubjectParams::new(0.5, 0.95, 0.05, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = predictive_boxstats(&theta, &[1.0], 10_000, &FixedRatio(1.0), &mut rng).unwrap();
        assert!((b[0].stats.median / 0.09f64.exp() - 1.0).abs() < 0.01);
        assert!(predictive_boxstats(&theta, &[1.0], 50, &FixedRatio(1.0), &mut rng).is_err());
    }

    #[test]
    fn box_quartiles_are_stable_across_seeds() {
        let theta = SubjectParams::new(0.5, 0.95, 0.05, 0.3).unwrap();
        let run = |seed| {
            predictive_boxstats(&theta, &[2.0], 100_000, &FixedRatio(0.8), &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()[0]
                .stats
        };
        let (a, b) = (run(1), run(2));
        for (u, v) in [(a.q1, b.q1), (a.median, b.median), (a.q3, b.q3)] {
            assert!((u / v - 1.0).abs() < 0.005);
        }
    }

    #[test]
    fn degenerate_box_collapses() {
        let theta = SubjectParams::new(0.5, 0.95, 0.05, 1e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = predictive_boxstats(&theta, &[2.0], 1000, &FixedRatio(0.5), &mut rng).unwrap()[0];
        assert!((b.stats.lower_whisker - 1.0).abs() < 1e-3 && (b.stats.upper_whisker - 1.0).abs() < 1e-3);
    }
}
