//! Sources of optimal aim points used by the likelihood and the simulators.

use crate::error::Result;
use crate::optimizer::{aim_curve, optimal_aim, QuadratureSpec, SubjectParams};

/// Maps targets to optimal aim points (response modes) under given parameters.
pub trait AimProvider: Sync {
    fn aims(&self, targets: &[f64], theta: &SubjectParams) -> Result<Vec<f64>>;

    fn aim(&self, x: f64, theta: &SubjectParams) -> Result<f64> {
        Ok(self.aims(&[x], theta)?[0])
    }

    fn describe(&self) -> String;
}

/// One Brent solve per target.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactAim {
    pub quad: QuadratureSpec,
}

impl AimProvider for ExactAim {
    fn aims(&self, targets: &[f64], theta: &SubjectParams) -> Result<Vec<f64>> {
        targets.iter().map(|&x| optimal_aim(x, theta, &self.quad)).collect()
    }

    fn describe(&self) -> String {
        format!("exact optimizer ({} nodes, {} sigmas)", self.quad.nodes_per_axis, self.quad.log_range_sigmas)
    }
}

/// Solves on a log-spaced grid spanning the targets and interpolates.
#[derive(Debug, Clone, Copy)]
pub struct InterpolatedAim {
    pub quad: QuadratureSpec,
    pub grid_size: usize,
}

impl Default for InterpolatedAim {
    fn default() -> Self {
        Self { quad: QuadratureSpec::new(24, 6.0).expect("valid quadrature"), grid_size: 12 }
    }
}

impl AimProvider for InterpolatedAim {
    fn aims(&self, targets: &[f64], theta: &SubjectParams) -> Result<Vec<f64>> {
        let curve = aim_curve(targets, theta, &self.quad, self.grid_size)?;
        Ok(targets.iter().map(|&x| curve.eval(x)).collect())
    }

    fn describe(&self) -> String {
        format!(
            "exact optimizer on a {}-point aim curve ({} nodes, {} sigmas)",
            self.grid_size, self.quad.nodes_per_axis, self.quad.log_range_sigmas
        )
    }
}

impl<T: AimProvider + ?Sized> AimProvider for &T {
    fn aims(&self, targets: &[f64], theta: &SubjectParams) -> Result<Vec<f64>> {
        (**self).aims(targets, theta)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolated_tracks_exact() {
        let theta = SubjectParams::new(0.5, 0.7, 0.05, 0.3).unwrap();
        let targets: Vec<f64> = (0..40).map(|i| 1.2 + 0.045 * i as f64).collect();
        let exact = ExactAim::default().aims(&targets, &theta).unwrap();
        let interp = InterpolatedAim::default().aims(&targets, &theta).unwrap();
        for (a, b) in exact.iter().zip(&interp) {
            assert!((a / b - 1.0).abs() < 1e-3, "{a} vs {b}");
        }
    }
}
