//! Summary statistics for samples: quantiles, box statistics, kernel-density
//! modes, and the one-sample Kolmogorov–Smirnov distance.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(domain("statistic of an empty sample"));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(domain("sample contains non-finite values"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Linear interpolation between order statistics (the "type 7" rule).
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn quantile(xs: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("quantile level must lie in [0, 1], got {p}")));
    }
    Ok(quantile_sorted(&sorted(xs)?, p))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Box-plot statistics; whiskers at 1.5 IQR clipped to the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_whisker: f64,
}

pub fn box_stats(xs: &[f64]) -> Result<BoxStats> {
    let v = sorted(xs)?;
    let q1 = quantile_sorted(&v, 0.25);
    let median = quantile_sorted(&v, 0.5);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let lower_whisker = v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(q1);
    let upper_whisker = v.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(q3);
    Ok(BoxStats { lower_whisker, q1, median, q3, upper_whisker })
}

/// Silverman's rule-of-thumb bandwidth, `0.9 min(sd, IQR / 1.34) n^{-1/5}`.
pub fn silverman_bandwidth(xs: &[f64]) -> Result<f64> {
    let v = sorted(xs)?;
    let n = v.len() as f64;
    let sd = if v.len() > 1 { variance(&v).sqrt() } else { 0.0 };
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Mode of a Gaussian kernel density estimate, located on a grid over the
/// sample range and refined by a parabola through the best grid cell.
pub fn kde_mode(xs: &[f64]) -> Result<f64> {
    let v = sorted(xs)?;
    let bw = silverman_bandwidth(&v)?;
    let (lo, hi) = (v[0], v[v.len() - 1]);
    if bw <= 0.0 || hi <= lo {
        return Ok(quantile_sorted(&v, 0.5));
    }
    const GRID: usize = 512;
    let step = (hi - lo) / (GRID - 1) as f64;
    let density = |x: f64| -> f64 {
        // kernel mass beyond 8 bandwidths is negligible
        let a = v.partition_point(|&s| s < x - 8.0 * bw);
        let b = v.partition_point(|&s| s <= x + 8.0 * bw);
        v[a..b]
            .iter()
            .map(|&s| {
                let z = (x - s) / bw;
                (-0.5 * z * z).exp()
            })
            .sum()
    };
    let values: Vec<f64> = (0..GRID).map(|i| density(lo + step * i as f64)).collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
    let x = lo + step * best as f64;
    if best == 0 || best == GRID - 1 {
        return Ok(x);
    }
    let (l, c, r) = (values[best - 1], values[best], values[best + 1]);
    let denom = l - 2.0 * c + r;
    let shift = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    Ok(x + shift.clamp(-0.5, 0.5) * step)
}

/// One-sample KS distance against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<f64> {
    let v = sorted(xs)?;
    let n = v.len() as f64;
    Ok(v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max))
}
