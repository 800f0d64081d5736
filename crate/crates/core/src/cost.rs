//! Task cost and effort-augmented cost.

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_positive, Result};

/// Regularization added before taking logs of a cost surface.
pub const LOG_SURFACE_EPS: f64 = 1e-9;

/// Error exponent `alpha` and task-vs-effort weight `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub alpha: f64,
    pub beta: f64,
}

impl CostParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("alpha", self.alpha)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(domain(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        Ok(())
    }

    /// `beta * |x_p - x_a|^alpha + (1 - beta) * x_a`
    pub fn eval(&self, x_p: f64, x_a: f64) -> Result<f64> {
        self.validate()?;
        effort_cost_raw(x_p, x_a, self.alpha, self.beta)
    }
}

/// `|x_p - x_a|^alpha`
pub fn task_cost(x_p: f64, x_a: f64, alpha: f64) -> Result<f64> {
    ensure_positive("x_p", x_p)?;
    ensure_positive("x_a", x_a)?;
    ensure_positive("alpha", alpha)?;
    Ok((x_p - x_a).abs().powf(alpha))
}

pub fn effort_cost(x_p: f64, x_a: f64, p: &CostParams) -> Result<f64> {
    p.eval(x_p, x_a)
}

/// Effort cost without the `beta < 1` restriction, so `beta = 1` can be used
/// to check the pure task-cost limit.
pub(crate) fn effort_cost_raw(x_p: f64, x_a: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok(beta * task_cost(x_p, x_a, alpha)? + (1.0 - beta) * x_a)
}

/// Cost evaluated over a target x action grid. Rows follow `targets`, columns
/// follow `actions`. With `log_values`, each cell is `ln(cost + 1e-9)`.
pub fn cost_surface(
    targets: &[f64],
    actions: &[f64],
    p: &CostParams,
    log_values: bool,
) -> Result<Vec<Vec<f64>>> {
    check_grid("target", targets)?;
    check_grid("action", actions)?;
    p.validate()?;
    targets
        .iter()
        .map(|&x| {
            actions
                .iter()
                .map(|&a| {
                    let c = p.eval(x, a)?;
                    Ok(if log_values { (c + LOG_SURFACE_EPS).ln() } else { c })
                })
                .collect()
        })
        .collect()
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(domain(format!("{name} grid is empty")));
    }
    for &v in grid {
        ensure_positive(&format!("{name} grid value"), v)?;
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn task_cost_examples() {
        assert_eq!(task_cost(3.0, 1.0, 2.0).unwrap(), 4.0);
        assert_eq!(task_cost(2.0, 2.0, 0.5).unwrap(), 0.0);
        assert_relative_eq!(task_cost(1.0, 1.5, 8.0).unwrap(), 0.003_906_25, max_relative = 1e-15);
        assert!(task_cost(1.0, 1.0, 0.0).is_err());
        assert!(task_cost(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn effort_cost_examples() {
        for alpha in [0.3, 1.0, 5.0] {
            let p = CostParams::new(alpha, 0.8).unwrap();
            assert_relative_eq!(effort_cost(2.0, 2.0, &p).unwrap(), 0.4, max_relative = 1e-12);
        }
        let p = CostParams::new(2.0, 0.9).unwrap();
        assert_relative_eq!(effort_cost(3.0, 1.0, &p).unwrap(), 3.7, max_relative = 1e-12);
        assert!(CostParams::new(2.0, 1.0).is_err());
        assert!(CostParams::new(-2.0, 0.5).is_err());
    }

    #[test]
    fn beta_one_limit_is_task_cost() {
        for (xp, xa, a) in [(1.0, 2.0, 0.5), (3.0, 0.2, 2.0), (0.7, 0.71, 8.0)] {
            assert_eq!(effort_cost_raw(xp, xa, a, 1.0).unwrap(), task_cost(xp, xa, a).unwrap());
        }
    }

    #[test]
    fn surface_single_cell() {
        let p = CostParams::new(2.0, 0.9).unwrap();
        let s = cost_surface(&[1.0], &[1.0], &p, false).unwrap();
        assert_eq!(s.len(), 1);
        assert_relative_eq!(s[0][0], 0.1, max_relative = 1e-12);
    }

    #[test]
    fn surface_matches_pointwise() {
        let p = CostParams::new(0.5, 0.7).unwrap();
        let grid: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
        let s = cost_surface(&grid, &grid, &p, false).unwrap();
        for (i, &x) in grid.iter().enumerate() {
            for (j, &a) in grid.iter().enumerate() {
                let direct = 0.7 * (x - a).abs().sqrt() + 0.3 * a;
                assert_relative_eq!(s[i][j], direct, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn log_surface_is_finite_at_zero_cost() {
        // beta close to 1 and a tiny action: cost underflows towards zero
        let p = CostParams::new(2.0, 1.0 - 1e-16).unwrap();
        let s = cost_surface(&[1.0], &[1.0], &p, true).unwrap();
        assert!(s[0][0].is_finite());
        assert_relative_eq!(s[0][0], (1e-9f64).ln(), max_relative = 1e-6);
    }

    #[test]
    fn surface_grid_validation() {
        let p = CostParams::new(1.0, 0.5).unwrap();
        assert!(cost_surface(&[], &[1.0], &p, false).is_err());
        assert!(cost_surface(&[2.0, 1.0], &[1.0], &p, false).is_err());
        assert!(cost_surface(&[1.0], &[0.0, 1.0], &p, false).is_err());
    }

    proptest! {
        #[test]
        fn error_term_symmetry(a in 1e-3f64..10.0, b in 1e-3f64..10.0, alpha in 0.01f64..8.0) {
            prop_assert_eq!(task_cost(a, b, alpha).unwrap(), task_cost(b, a, alpha).unwrap());
        }

        #[test]
        fn effort_monotone_above_target(
            xp in 0.1f64..5.0, d1 in 0.0f64..3.0, dd in 1e-3f64..3.0,
            alpha in 0.01f64..8.0, beta in 0.01f64..0.99,
        ) {
            let p = CostParams::new(alpha, beta).unwrap();
            let lo = p.eval(xp, xp + d1).unwrap();
            let hi = p.eval(xp, xp + d1 + dd).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn linear_in_beta(xp in 0.1f64..5.0, xa in 0.1f64..5.0, alpha in 0.01f64..8.0, b in 0.1f64..0.4) {
            let c = |beta: f64| CostParams::new(alpha, beta).unwrap().eval(xp, xa).unwrap();
            let (c1, c2, c3) = (c(b), c(b + 0.2), c(b + 0.4));
            prop_assert!((c2 - 0.5 * (c1 + c3)).abs() <= 1e-12 * (1.0 + c2.abs()));
        }

        #[test]
        fn effort_makes_overshoot_costlier(
            xp in 0.1f64..5.0, frac in 0.01f64..0.99, alpha in 0.01f64..8.0, beta in 0.01f64..0.99,
        ) {
            let p = CostParams::new(alpha, beta).unwrap();
            let d = frac * xp;
            prop_assert!(p.eval(xp, xp + d).unwrap() > p.eval(xp, xp - d).unwrap());
        }
    }
}
