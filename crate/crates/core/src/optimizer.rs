//! Expected loss of an aim point and its minimization.
//!
//! With `x_p ~ logN(mu_p, sigma_p)` and `x_a ~ logN(mu_a, sigma_a)` independent,
//! write `t = ln x_p - ln x_a`. Then `|x_p - x_a|^alpha = x_a^alpha |e^t - 1|^alpha`
//! and tilting the joint Gaussian of `(ln x_a, t)` by `x_a^alpha` gives
//!
//! ```text
//! E|x_p - x_a|^alpha = exp(alpha mu_a + alpha^2 sigma_a^2 / 2)
//!                      * E_{t ~ N(mu_p - mu_a - alpha sigma_a^2, sigma_p^2 + sigma_a^2)} |e^t - 1|^alpha
//! ```
//!
//! so the double integral collapses to one Gaussian integral, evaluated with
//! Gauss–Legendre pieces split at the cusp `t = 0`. The effort term
//! `(1 - beta) E[x_a]` is the log-normal mean. The literal two-axis tensor
//! product rule is kept as [`expected_loss_tensor`] for cross-checking.

use serde::{Deserialize, Serialize};

use crate::cost::effort_cost_raw;
use crate::error::{domain, ensure_positive, Error, Result};
use crate::numeric::{brent_minimize, GaussLegendre, MonotoneCubic};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-space tolerance on the aim point.
pub const AIM_TOLERANCE: f64 = 1e-6;
pub const AIM_MAX_ITER: usize = 100;
const BRACKET_LO_FACTOR: f64 = 0.05;
const BRACKET_HI_FACTOR: f64 = 3.0;
const MAX_EXPANSIONS: usize = 5;
const SCAN_POINTS: usize = 13;

/// The inferred quadruple plus whether `sigma_p` is held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_p: f64,
    pub sigma_a: f64,
    #[serde(default)]
    pub sigma_p_fixed: bool,
}

impl SubjectParams {
    pub fn new(alpha: f64, beta: f64, sigma_p: f64, sigma_a: f64) -> Result<Self> {
        let t = Self { alpha, beta, sigma_p, sigma_a, sigma_p_fixed: false };
        t.validate()?;
        Ok(t)
    }

    pub fn with_fixed_sigma_p(mut self, fixed: bool) -> Self {
        self.sigma_p_fixed = fixed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("alpha", self.alpha)?;
        ensure_positive("sigma_p", self.sigma_p)?;
        ensure_positive("sigma_a", self.sigma_a)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(domain(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        Ok(())
    }

    /// Coordinates in the order alpha, beta, sigma_p, sigma_a.
    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.sigma_p, self.sigma_a]
    }

    pub fn from_array(v: [f64; 4], sigma_p_fixed: bool) -> Self {
        Self { alpha: v[0], beta: v[1], sigma_p: v[2], sigma_a: v[3], sigma_p_fixed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes per integration piece.
    pub nodes_per_axis: usize,
    /// Truncation half-width in units of the log-space scale.
    pub log_range_sigmas: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes_per_axis: 96, log_range_sigmas: 6.0 }
    }
}

impl QuadratureSpec {
    pub fn new(nodes_per_axis: usize, log_range_sigmas: f64) -> Result<Self> {
        let q = Self { nodes_per_axis, log_range_sigmas };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 16 {
            return Err(domain(format!("nodes_per_axis must be >= 16, got {}", self.nodes_per_axis)));
        }
        if !(self.log_range_sigmas >= 4.0) || !self.log_range_sigmas.is_finite() {
            return Err(domain(format!(
                "log_range_sigmas must be >= 4, got {}",
                self.log_range_sigmas
            )));
        }
        Ok(())
    }
}

/// Precomputed per-(target, theta) quantities for repeated loss evaluations.
struct LossKernel<'a> {
    rule: &'a GaussLegendre,
    k: f64,
    alpha: f64,
    ln_beta: f64,
    ln_effort_weight: f64,
    mu_p: f64,
    var_a: f64,
    s: f64,
}

impl<'a> LossKernel<'a> {
    fn new(x: f64, theta: &SubjectParams, beta: f64, rule: &'a GaussLegendre, q: &QuadratureSpec) -> Self {
        let var_a = theta.sigma_a * theta.sigma_a;
        let var_p = theta.sigma_p * theta.sigma_p;
        Self {
            rule,
            k: q.log_range_sigmas,
            alpha: theta.alpha,
            ln_beta: beta.ln(),
            ln_effort_weight: (1.0 - beta).ln(),
            mu_p: x.ln() + var_p,
            var_a,
            s: (var_a + var_p).sqrt(),
        }
    }

    /// ln of the loss limit as the aim goes to zero: `beta E[x_p^alpha]`.
    fn ln_limit_at_zero(&self) -> f64 {
        let var_p = self.s * self.s - self.var_a;
        self.ln_beta + self.alpha * self.mu_p + 0.5 * self.alpha * self.alpha * var_p
    }

    /// Natural log of the expected loss at log aim `ln_aim`.
    fn log_loss(&self, ln_aim: f64) -> f64 {
        let mu_a = ln_aim + self.var_a;
        let alpha = self.alpha;
        let ln_task = alpha * mu_a + 0.5 * alpha * alpha * self.var_a + self.ln_abs_moment(mu_a);
        let ln_effort = self.ln_effort_weight + mu_a + 0.5 * self.var_a;
        log_add(self.ln_beta + ln_task, ln_effort)
    }

    /// ln E_{t ~ N(c, s^2)} |e^t - 1|^alpha with c = mu_p - mu_a - alpha sigma_a^2.
    fn ln_abs_moment(&self, mu_a: f64) -> f64 {
        let alpha = self.alpha;
        let s = self.s;
        let c = self.mu_p - mu_a - alpha * self.var_a;
        let z_lo = -self.k;
        // |e^t - 1|^alpha ~ e^{alpha t} for t >> 0 shifts the mass up by alpha s
        let z_hi = self.k + alpha * s;
        let z_cusp = -c / s;

        let ln_integrand = |z: f64| -> f64 {
            let t = c + s * z;
            let ln_abs = if t > 0.0 { t + (-(-t).exp()).ln_1p() } else { (-t.exp_m1()).ln() };
            -0.5 * z * z - LN_SQRT_2PI + alpha * ln_abs
        };

        let mut acc = LogSumExp::default();
        if z_cusp > z_lo && z_cusp < z_hi {
            self.accumulate_cusp_side(&mut acc, z_cusp, z_lo, &ln_integrand);
            self.accumulate_cusp_side(&mut acc, z_cusp, z_hi, &ln_integrand);
        } else {
            self.accumulate_plain(&mut acc, z_lo, z_hi, &ln_integrand);
        }
        acc.value()
    }

    fn accumulate_plain<F: Fn(f64) -> f64>(&self, acc: &mut LogSumExp, a: f64, b: f64, f: &F) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let ln_half = half.abs().ln();
        for (&u, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            acc.push(w.ln() + ln_half + f(mid + half * u));
        }
    }

    /// Integrate from the cusp `z0` towards `end`. The unit-length piece next to
    /// the cusp uses `z = z0 + d u^3`, which turns the `|z - z0|^alpha` endpoint
    /// singularity into a smooth `u^{3 alpha + 2}` factor.
    fn accumulate_cusp_side<F: Fn(f64) -> f64>(&self, acc: &mut LogSumExp, z0: f64, end: f64, f: &F) {
        let len = (end - z0).abs();
        let dir = (end - z0).signum();
        let near = len.min(1.0);
        let d = near * dir;
        let ln_near = near.ln();
        for (&node, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let u = 0.5 * (node + 1.0);
            let z = z0 + d * u * u * u;
            // dz = 3 near u^2 du, du = dnode / 2
            acc.push(w.ln() + (1.5 * u * u).ln() + ln_near + f(z));
        }
        if len > 1.0 {
            self.accumulate_plain(acc, z0 + d, end, f);
        }
    }
}

#[derive(Default)]
struct LogSumExp {
    max: f64,
    sum: f64,
    started: bool,
}

impl LogSumExp {
    #[inline]
    fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY || v.is_nan() {
            return;
        }
        if !self.started {
            self.max = v;
            self.sum = 1.0;
            self.started = true;
        } else if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    fn value(&self) -> f64 {
        if self.started {
            self.max + self.sum.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

fn check_inputs(aim: f64, x: f64, theta: &SubjectParams, q: &QuadratureSpec) -> Result<()> {
    ensure_positive("aim", aim)?;
    ensure_positive("target", x)?;
    theta.validate()?;
    q.validate()
}

/// Natural log of the expected loss; never overflows.
pub fn log_expected_loss(aim: f64, x: f64, theta: &SubjectParams, q: &QuadratureSpec) -> Result<f64> {
    check_inputs(aim, x, theta, q)?;
    let rule = GaussLegendre::cached(q.nodes_per_axis);
    let v = LossKernel::new(x, theta, theta.beta, &rule, q).log_loss(aim.ln());
    if v.is_nan() {
        return Err(Error::Overflow(format!("expected loss is NaN at aim {aim}, target {x}")));
    }
    Ok(v)
}

/// Expected loss of aiming the response mode at `aim` for target `x`.
pub fn expected_loss(aim: f64, x: f64, theta: &SubjectParams, q: &QuadratureSpec) -> Result<f64> {
    let ln = log_expected_loss(aim, x, theta, q)?;
    let v = ln.exp();
    if !v.is_finite() {
        return Err(Error::Overflow(format!(
            "expected loss exceeds f64 range (ln = {ln:.3}) at aim {aim}, target {x}, {theta:?}"
        )));
    }
    Ok(v)
}

/// Expected loss by the two-axis tensor-product Gauss–Legendre rule over
/// `[mu - k sigma, mu + k sigma]` in log space for percept and response.
/// Slower and less accurate near the `x_p = x_a` cusp; kept as a reference.
pub fn expected_loss_tensor(aim: f64, x: f64, theta: &SubjectParams, q: &QuadratureSpec) -> Result<f64> {
    check_inputs(aim, x, theta, q)?;
    let rule = GaussLegendre::cached(q.nodes_per_axis);
    let k = q.log_range_sigmas;
    let mu_p = x.ln() + theta.sigma_p * theta.sigma_p;
    let mu_a = aim.ln() + theta.sigma_a * theta.sigma_a;
    // standard-normal weights on [-k, k]
    let pts: Vec<(f64, f64)> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&u, &w)| {
            let z = k * u;
            (z, w * k * (-0.5 * z * z - LN_SQRT_2PI).exp())
        })
        .collect();
    let mut total = 0.0;
    for &(zp, wp) in &pts {
        let xp = (mu_p + theta.sigma_p * zp).exp();
        for &(za, wa) in &pts {
            let xa = (mu_a + theta.sigma_a * za).exp();
            total += wp * wa * effort_cost_raw(xp, xa, theta.alpha, theta.beta)?;
        }
    }
    if !total.is_finite() {
        return Err(Error::Overflow(format!("tensor expected loss overflow at aim {aim}")));
    }
    Ok(total)
}

/// Aim point (response mode) minimizing the expected loss for target `x`.
pub fn optimal_aim(x: f64, theta: &SubjectParams, q: &QuadratureSpec) -> Result<f64> {
    check_inputs(1.0, x, theta, q)?;
    let rule = GaussLegendre::cached(q.nodes_per_axis);
    let kernel = LossKernel::new(x, theta, theta.beta, &rule, q);
    minimize_log_aim(&kernel, x).map(f64::exp)
}

/// Lowest interior local minimum of the log loss over a scan of the bracket,
/// refined by Brent. The scan mixes an even grid with points clustered around
/// the target at multiples of the combined noise scale, so narrow basins near
/// the target are not stepped over.
fn minimize_log_aim(kernel: &LossKernel<'_>, x: f64) -> Result<f64> {
    const CLUSTER: [f64; 8] = [-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
    let initial_lo = (BRACKET_LO_FACTOR * x).ln();
    let mut lo = initial_lo;
    let mut hi = (BRACKET_HI_FACTOR * x).ln();
    let f = |u: f64| {
        let v = kernel.log_loss(u);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let center = x.ln();

    for expansion in 0..=MAX_EXPANSIONS {
        let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
        let mut pts: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + step * i as f64).collect();
        pts.extend(CLUSTER.iter().map(|k| center + k * kernel.s).filter(|&u| u > lo && u < hi));
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let vals: Vec<f64> = pts.iter().map(|&u| f(u)).collect();

        let basin = (1..pts.len() - 1)
            .filter(|&i| {
                vals[i] <= vals[i - 1] && vals[i] <= vals[i + 1] && (vals[i] < vals[i - 1] || vals[i] < vals[i + 1])
            })
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]));

        let Some(i) = basin else {
            if expansion == MAX_EXPANSIONS {
                break;
            }
            let width = hi - lo;
            if vals[0] <= vals[vals.len() - 1] {
                lo -= width;
            } else {
                hi += width;
            }
            continue;
        };

        let m = brent_minimize(f, pts[i - 1], pts[i + 1], AIM_TOLERANCE, AIM_MAX_ITER);
        if !m.fx.is_finite() {
            return Err(Error::Overflow(format!("expected loss not finite near aim {}", m.x.exp())));
        }
        // After expanding towards zero, a "minimum" that is not clearly below the
        // aim -> 0 limit is quadrature noise on a flat asymptote.
        if lo < initial_lo && m.fx >= kernel.ln_limit_at_zero() - 1e-6 {
            return Err(Error::Boundary(format!(
                "expected loss decreases towards aim -> 0 for target {x} (flat at {:.3e})",
                m.x.exp()
            )));
        }
        return Ok(m.x);
    }
    Err(Error::BracketExhausted { expansions: MAX_EXPANSIONS, lo, hi })
}

/// Closed-form optimum for the quadratic (`alpha = 2`) loss:
/// `(x e^{3 sigma_p^2 / 2} - (1 - beta) / (2 beta)) e^{-5 sigma_a^2 / 2}`.
///
/// Setting the derivative of `beta (E x_p^2 - 2 E x_p m + m^2 e^{sigma_a^2}) + (1 - beta) m`
/// in the response mean `m` to zero gives `m`; the mode is `m e^{-3 sigma_a^2 / 2}`.
pub fn closed_form_quadratic(x: f64, beta: f64, sigma_p: f64, sigma_a: f64) -> Result<f64> {
    ensure_positive("target", x)?;
    ensure_positive("sigma_p", sigma_p)?;
    ensure_positive("sigma_a", sigma_a)?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    let inner = x * (1.5 * sigma_p * sigma_p).exp() - (1.0 - beta) / (2.0 * beta);
    if inner <= 0.0 {
        return Err(Error::Boundary(format!(
            "effort dominates: quadratic optimum inner term {inner:.4} <= 0 at target {x}"
        )));
    }
    Ok(inner * (-2.5 * sigma_a * sigma_a).exp())
}

/// Aim point as a smooth function of the target for fixed parameters,
/// interpolated from direct solves on a log-spaced grid.
#[derive(Debug, Clone)]
pub struct AimCurve {
    interp: MonotoneCubic,
}

impl AimCurve {
    pub fn eval(&self, x: f64) -> f64 {
        self.interp.eval(x)
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        self.interp.knots()
    }
}

pub fn aim_curve(
    targets: &[f64],
    theta: &SubjectParams,
    q: &QuadratureSpec,
    grid_size: usize,
) -> Result<AimCurve> {
    if targets.is_empty() {
        return Err(domain("aim curve needs at least one target"));
    }
    if grid_size < 8 {
        return Err(domain(format!("aim curve grid size must be >= 8, got {grid_size}")));
    }
    let (lo, hi) = targets.iter().try_fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        ensure_positive("target", x).map(|_| (lo.min(x), hi.max(x)))
    })?;
    theta.validate()?;
    q.validate()?;
    let rule = GaussLegendre::cached(q.nodes_per_axis);

    let xs: Vec<f64> = if hi > lo {
        let (llo, lhi) = (lo.ln(), hi.ln());
        (0..grid_size)
            .map(|i| {
                if i + 1 == grid_size {
                    hi
                } else {
                    (llo + (lhi - llo) * i as f64 / (grid_size - 1) as f64).exp()
                }
            })
            .collect()
    } else {
        vec![lo]
    };
    let ys = xs
        .iter()
        .map(|&x| {
            let kernel = LossKernel::new(x, theta, theta.beta, &rule, q);
            minimize_log_aim(&kernel, x).map(f64::exp)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(AimCurve { interp: MonotoneCubic::new(xs, ys)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const NEAR_ONE: f64 = 1.0 - 1e-9;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn theta(alpha: f64, beta: f64, sigma_p: f64, sigma_a: f64) -> SubjectParams {
        SubjectParams::new(alpha, beta, sigma_p, sigma_a).unwrap()
    }

    #[test]
    fn quadratic_loss_matches_moments() {
        // E[(x - x_a)^2] = x^2 - 2x e^{mu + s^2/2} + e^{2mu + 2s^2}, mu = ln aim + s^2
        let t = theta(2.0, NEAR_ONE, 1e-4, 0.3);
        let v = expected_loss(1.0, 1.0, &t, &q()).unwrap();
        let exact = 1.0 - 2.0 * 0.135f64.exp() + 0.36f64.exp();
        assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");
        assert!((v - 0.14425).abs() < 1e-4);
    }

    #[test]
    fn degenerate_noise_collapses_to_point_cost() {
        let t = theta(2.0, 0.8, 1e-4, 1e-4);
        let v = expected_loss(2.0, 2.0, &t, &q()).unwrap();
        assert!((v - 0.4).abs() < 1e-3, "{v}");
    }

    #[test]
    fn fast_and_tensor_routes_agree() {
        for (a, b, sp, sa, x, aim) in [
            (2.0, 0.9, 0.05, 0.2, 2.0, 1.8),
            (0.5, 0.95, 0.05, 0.3, 3.0, 2.9),
            (3.0, 0.7, 0.2, 0.1, 1.0, 0.9),
            (1.0, 0.6, 0.3, 0.5, 4.0, 2.0),
        ] {
            let t = theta(a, b, sp, sa);
            let fast = expected_loss(aim, x, &t, &q()).unwrap();
            // the tensor rule converges slowly across the cusp, so it gets many more nodes
            let tensor = expected_loss_tensor(aim, x, &t, &QuadratureSpec::new(512, 8.0).unwrap()).unwrap();
            assert_relative_eq!(fast, tensor, max_relative = 1e-4);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let t = theta(400.0, 0.9, 0.5, 0.9);
        assert!(matches!(expected_loss(50.0, 50.0, &t, &q()), Err(Error::Overflow(_))));
        assert!(log_expected_loss(50.0, 50.0, &t, &q()).unwrap().is_finite());
    }

    #[test]
    fn quadrature_spec_validation() {
        assert!(QuadratureSpec::new(15, 6.0).is_err());
        assert!(QuadratureSpec::new(16, 3.9).is_err());
        assert!(QuadratureSpec::new(16, 4.0).is_ok());
        let t = theta(2.0, 0.9, 0.1, 0.1);
        assert!(expected_loss(0.0, 1.0, &t, &q()).is_err());
        assert!(expected_loss(1.0, -1.0, &t, &q()).is_err());
    }

    #[test]
    fn optimal_aim_examples() {
        let y = optimal_aim(1.0, &theta(2.0, NEAR_ONE, 1e-4, 0.3), &q()).unwrap();
        assert!((y - 0.79852).abs() < 1e-3, "{y}");
        let y = optimal_aim(2.0, &theta(2.0, 0.9, 0.05, 0.2), &q()).unwrap();
        assert!((y - 1.76620).abs() < 2e-3, "{y}");
        let y = optimal_aim(1.0, &theta(2.0, 0.99, 0.05, 0.5), &q()).unwrap();
        assert!(y < 1.0);
    }

    #[test]
    fn closed_form_examples() {
        assert_relative_eq!(closed_form_quadratic(1.0, 1.0, 1e-9, 0.3).unwrap(), 0.79852, epsilon = 1e-5);
        assert_relative_eq!(closed_form_quadratic(2.0, 0.9, 0.05, 0.2).unwrap(), 1.76620, epsilon = 1e-5);
        assert_relative_eq!(closed_form_quadratic(1.0, 1.0, 0.3, 1e-9).unwrap(), 1.14454, epsilon = 1e-5);
        assert!(matches!(closed_form_quadratic(0.2, 0.5, 0.01, 0.1), Err(Error::Boundary(_))));
        assert!(closed_form_quadratic(1.0, 1.5, 0.1, 0.1).is_err());
    }

    #[test]
    fn effort_dominance_is_a_boundary_error() {
        let err = optimal_aim(0.2, &theta(0.05, 0.5, 0.3, 0.8), &q()).unwrap_err();
        assert!(err.is_boundary(), "{err}");
    }

    #[test]
    fn minimizer_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in [theta(0.5, 0.95, 0.05, 0.3), theta(2.0, 0.8, 0.2, 0.4), theta(6.0, 0.9, 0.1, 0.1)] {
            let x = 2.5;
            let y = optimal_aim(x, &t, &q()).unwrap();
            let best = expected_loss(y, x, &t, &q()).unwrap();
            for _ in 0..100 {
                let a = rng.random_range(0.1..8.0);
                assert!(best <= expected_loss(a, x, &t, &q()).unwrap() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn scale_covariance_of_quadratic_loss() {
        let t = theta(2.0, NEAR_ONE, 0.1, 0.3);
        let base = optimal_aim(2.0, &t, &q()).unwrap();
        for c in [0.5, 2.0] {
            let scaled = optimal_aim(2.0 * c, &t, &q()).unwrap();
            assert_relative_eq!(scaled, c * base, max_relative = 1e-5);
        }
        // effort term breaks the covariance: relative aim grows with the target
        let t = theta(2.0, 0.8, 0.1, 0.3);
        let base = optimal_aim(2.0, &t, &q()).unwrap();
        assert!(optimal_aim(4.0, &t, &q()).unwrap() > 2.0 * base);
        assert!(optimal_aim(1.0, &t, &q()).unwrap() < 0.5 * base);
    }

    #[test]
    fn aim_curve_matches_direct_solves() {
        let t = theta(0.5, 0.95, 0.05, 0.3);
        let curve = aim_curve(&[1.2, 4.8], &t, &q(), 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let x = rng.random_range(1.2..4.8);
            let direct = optimal_aim(x, &t, &q()).unwrap();
            worst = worst.max((curve.eval(x) / direct - 1.0).abs());
        }
        assert!(worst < 1e-3, "max relative deviation {worst}");
    }

    #[test]
    fn aim_curve_degenerate_and_linear_cases() {
        let t = theta(1.5, 0.9, 0.1, 0.2);
        let curve = aim_curve(&[2.0, 2.0, 2.0], &t, &q(), 8).unwrap();
        assert_eq!(curve.eval(2.0), optimal_aim(2.0, &t, &q()).unwrap());

        let t = theta(2.0, NEAR_ONE, 1e-4, 0.3);
        let curve = aim_curve(&[0.5, 5.0], &t, &q(), 8).unwrap();
        for x in [0.6, 1.0, 2.2, 3.7, 4.9] {
            assert_relative_eq!(curve.eval(x), x * (-2.5f64 * 0.09).exp(), max_relative = 1e-4);
        }
        assert!(aim_curve(&[], &t, &q(), 8).is_err());
        assert!(aim_curve(&[1.0], &t, &q(), 7).is_err());
    }
}
