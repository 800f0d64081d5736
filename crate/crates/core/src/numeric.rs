//! Small numerical building blocks: Gauss–Legendre rules, Brent minimization,
//! and monotone cubic (Fritsch–Carlson) interpolation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{domain, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on P_n from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 {
                    let (_, d) = legendre_with_derivative(n, z);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared, cached rule of order `n`.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(GaussLegendre::new(n))).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Result of a bracketed scalar minimization.
#[derive(Debug, Clone, Copy)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Brent's method (golden section + parabolic interpolation) on [lo, hi]
/// with absolute tolerance `tol` on the abscissa.
pub fn brent_minimize<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Minimum
where
    F: FnMut(f64) -> f64,
{
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let m = 0.5 * (a + b);
        let tol1 = tol * 0.5 + f64::EPSILON * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }

        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = f(u);

        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum { x, fx, iterations }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(domain("interpolation needs matching, nonempty abscissae and ordinates"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("interpolation abscissae must be strictly increasing"));
        }
        let n = xs.len();
        let mut slopes = vec![0.0; n];
        if n >= 2 {
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
            if n == 2 {
                slopes[0] = delta[0];
                slopes[1] = delta[0];
            } else {
                for i in 1..n - 1 {
                    if delta[i - 1] * delta[i] > 0.0 {
                        // weighted harmonic mean
                        let w1 = 2.0 * h[i] + h[i - 1];
                        let w2 = h[i] + 2.0 * h[i - 1];
                        slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                    }
                }
                slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
                slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    /// Evaluate; outside the knot range the end cubic is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 {
            return self.ys[0];
        }
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }
}

/// Three-point end slope with the shape-preserving correction.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // degree 15 is exact for an 8-point rule
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(15) + 3.0 * x.powi(4));
        let exact = (2f64.powi(16) - 1.0) / 16.0 + 3.0 * (2f64.powi(5) + 1.0) / 5.0;
        assert_relative_eq!(v, exact, max_relative = 1e-13);
        let w: f64 = GaussLegendre::new(96).weights.iter().sum();
        assert_relative_eq!(w, 2.0, max_relative = 1e-13);
    }

    #[test]
    fn gauss_legendre_gaussian_integral() {
        let rule = GaussLegendre::cached(64);
        let v = rule.integrate(-8.0, 8.0, |x| (-0.5 * x * x).exp());
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn brent_finds_quadratic_and_non_smooth_minima() {
        let m = brent_minimize(|x| (x - 1.3).powi(2) + 2.0, -4.0, 5.0, 1e-8, 100);
        assert!((m.x - 1.3).abs() < 1e-7);
        assert_relative_eq!(m.fx, 2.0, max_relative = 1e-12);

        let m = brent_minimize(|x: f64| (x - 0.2).abs().sqrt(), -1.0, 1.0, 1e-8, 200);
        assert!((m.x - 0.2).abs() < 1e-6, "{:?}", m);

        let m = brent_minimize(|x: f64| x.cosh() - 0.5 * x, -3.0, 3.0, 1e-10, 100);
        assert!((m.x - 0.5f64.asinh()).abs() < 1e-8);
    }

    #[test]
    fn monotone_cubic_reproduces_lines_and_stays_monotone() {
        let xs: Vec<f64> = (0..10).map(|i| 0.5 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let p = MonotoneCubic::new(xs, ys).unwrap();
        for i in 0..100 {
            let x = 0.045 * i as f64;
            assert_relative_eq!(p.eval(x), 2.0 * x - 1.0, epsilon = 1e-12);
        }

        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = vec![0.0, 0.1, 0.1, 5.0, 5.1];
        let p = MonotoneCubic::new(xs, ys).unwrap();
        let mut prev = p.eval(0.0);
        for i in 1..=400 {
            let y = p.eval(0.01 * i as f64);
            assert!(y >= prev - 1e-12);
            prev = y;
        }
    }

    #[test]
    fn monotone_cubic_single_knot() {
        let p = MonotoneCubic::new(vec![2.0], vec![1.7]).unwrap();
        assert_eq!(p.eval(0.5), 1.7);
        assert_eq!(p.eval(2.0), 1.7);
        assert!(MonotoneCubic::new(vec![], vec![]).is_err());
        assert!(MonotoneCubic::new(vec![1.0, 1.0], vec![0.0, 1.0]).is_err());
    }
}
