//! Log-normal noise model shared by percepts and responses.
//!
//! Both constructors anchor the distribution's *mode* at a given magnitude:
//! a log-normal with log-space location `mu` and scale `sigma` has its mode at
//! `exp(mu - sigma^2)`, so `mu = ln(mode) + sigma^2`.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::error::{domain, ensure_positive, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-normal distribution parameterized by log-space location and scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalDist {
    mu: f64,
    sigma: f64,
}

impl LogNormalDist {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(domain(format!("log-normal location must be finite, got {mu}")));
        }
        ensure_positive("log-normal scale", sigma)?;
        Ok(Self { mu, sigma })
    }

    /// Distribution whose mode sits at `mode`.
    pub fn with_mode(mode: f64, sigma: f64) -> Result<Self> {
        ensure_positive("mode", mode)?;
        ensure_positive("sigma", sigma)?;
        Self::new(mode.ln() + sigma * sigma, sigma)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mode(&self) -> f64 {
        (self.mu - self.sigma * self.sigma).exp()
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    /// Log density at `x`. Non-positive `x` is an error, not zero density.
    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(domain(format!("log-normal density evaluated at non-positive x = {x}")));
        }
        Ok(self.log_pdf_unchecked(x))
    }

    #[inline]
    pub(crate) fn log_pdf_unchecked(&self, x: f64) -> f64 {
        let lx = x.ln();
        let z = (lx - self.mu) / self.sigma;
        -0.5 * z * z - lx - self.sigma.ln() - LN_SQRT_2PI
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.log_pdf(x).map(f64::exp)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let z = (x.ln() - self.mu) / self.sigma;
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }

    /// A single draw.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mu + self.sigma * z).exp()
    }

    /// `n` i.i.d. draws; deterministic for a given generator state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(domain("sample count must be at least 1"));
        }
        Ok((0..n).map(|_| self.draw(rng)).collect())
    }
}

/// Percept distribution for target `x`: mode at `x`, log-space scale `sigma_p`.
pub fn percept_dist(x: f64, sigma_p: f64) -> Result<LogNormalDist> {
    ensure_positive("target", x)?;
    ensure_positive("sigma_p", sigma_p)?;
    LogNormalDist::with_mode(x, sigma_p)
}

/// Response distribution for aim point `aim`: mode at `aim`, log-space scale `sigma_a`.
pub fn response_dist(aim: f64, sigma_a: f64) -> Result<LogNormalDist> {
    ensure_positive("aim", aim)?;
    ensure_positive("sigma_a", sigma_a)?;
    LogNormalDist::with_mode(aim, sigma_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_density_at_median() {
        let d = LogNormalDist::new(0.0, 1.0).unwrap();
        assert_relative_eq!(d.log_pdf(1.0).unwrap(), -0.918_938_533, epsilon = 1e-8);
    }

    #[test]
    fn density_peaks_at_mode() {
        let d = LogNormalDist::new(0.703_147, 0.1).unwrap();
        let at_mode = d.log_pdf(2.0).unwrap();
        for i in 1..400 {
            let x = 0.01 * i as f64;
            assert!(d.log_pdf(x).unwrap() <= at_mode + 1e-9, "x = {x}");
        }
    }

    #[test]
    fn density_matches_change_of_variables() {
        // normal density of ln x, divided by x
        let (mu, sigma, x) = (0.5_f64, 0.3_f64, 0.7_f64);
        let z = (x.ln() - mu) / sigma;
        let normal = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let d = LogNormalDist::new(mu, sigma).unwrap();
        assert_relative_eq!(d.pdf(x).unwrap(), normal / x, max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_positive_support() {
        let d = LogNormalDist::new(0.0, 1.0).unwrap();
        assert!(d.log_pdf(0.0).is_err());
        assert!(d.log_pdf(-1.0).is_err());
        assert!(LogNormalDist::new(0.0, 0.0).is_err());
        assert!(LogNormalDist::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = LogNormalDist::new(0.0, 0.3).unwrap();
        let xs = d.sample(&mut rng, 100_000).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean / 0.045_f64.exp() - 1.0).abs() < 0.01);

        let d = LogNormalDist::new(1.0, 0.2).unwrap();
        let mut xs = d.sample(&mut rng, 100_000).unwrap();
        xs.sort_by(f64::total_cmp);
        let median = 0.5 * (xs[49_999] + xs[50_000]);
        assert!((median / std::f64::consts::E - 1.0).abs() < 0.01);
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = LogNormalDist::new(0.2, 0.4).unwrap();
        let a = d.sample(&mut ChaCha8Rng::seed_from_u64(3), 50).unwrap();
        let b = d.sample(&mut ChaCha8Rng::seed_from_u64(3), 50).unwrap();
        assert_eq!(a, b);
        assert!(d.sample(&mut ChaCha8Rng::seed_from_u64(3), 0).is_err());
    }

    #[test]
    fn empirical_cdf_matches_analytic() {
        let d = LogNormalDist::new(0.3, 0.5).unwrap();
        let mut xs = d.sample(&mut ChaCha8Rng::seed_from_u64(11), 100_000).unwrap();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = d.cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS = {ks}");
    }

    #[test]
    fn percept_and_response_constructors() {
        let d = percept_dist(2.0, 0.1).unwrap();
        assert_relative_eq!(d.mu(), 0.703_147, epsilon = 1e-6);
        assert_relative_eq!(d.mode(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(percept_dist(1.0, 0.05).unwrap().mu(), 0.0025, epsilon = 1e-15);
        assert_relative_eq!(percept_dist(4.8, 0.2).unwrap().mode(), 4.8, max_relative = 1e-14);

        assert_relative_eq!(response_dist(1.0, 0.3).unwrap().mu(), 0.09, epsilon = 1e-15);
        assert_relative_eq!(response_dist(0.79852, 0.3).unwrap().mode(), 0.79852, max_relative = 1e-14);
        let d = response_dist(2.5, 0.01).unwrap();
        assert_relative_eq!(d.mean() / d.mode(), (1.5e-4_f64).exp(), max_relative = 1e-12);

        assert!(percept_dist(0.0, 0.1).is_err());
        assert!(percept_dist(1.0, -0.1).is_err());
        assert!(response_dist(-1.0, 0.1).is_err());
        assert!(response_dist(1.0, 0.0).is_err());
    }

    /// Composite Simpson in u = ln x over +-12 sigma.
    fn integral_of_density(d: &LogNormalDist) -> f64 {
        let n = 4000;
        let (lo, hi) = (d.mu() - 12.0 * d.sigma(), d.mu() + 12.0 * d.sigma());
        let h = (hi - lo) / n as f64;
        let f = |u: f64| {
            let x = u.exp();
            d.pdf(x).unwrap() * x
        };
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    proptest! {
        #[test]
        fn mode_anchoring(x in 1e-3f64..1e3, sigma in 1e-3f64..2.0) {
            let p = percept_dist(x, sigma).unwrap();
            let r = response_dist(x, sigma).unwrap();
            prop_assert!((p.mode() / x - 1.0).abs() < 1e-12);
            prop_assert!((r.mode() / x - 1.0).abs() < 1e-12);
        }

        #[test]
        fn order_statistics(x in 1e-3f64..1e3, sigma in 1e-3f64..2.0) {
            let d = percept_dist(x, sigma).unwrap();
            prop_assert!(d.mode() < d.median());
            prop_assert!(d.median() < d.mean());
        }

        #[test]
        fn normalization(mu in -2.0f64..2.0, sigma in 0.01f64..1.0) {
            let d = LogNormalDist::new(mu, sigma).unwrap();
            let total = integral_of_density(&d);
            prop_assert!((total - 1.0).abs() < 1e-6, "integral = {}", total);
        }
    }
}
