//! Monte Carlo summaries and the log-log regression harness.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// (estimate - target) / stderr; infinite when the stderr vanishes and the
    /// estimate misses.
    pub fn zscore(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}

pub fn mean_stderr(xs: &[f64]) -> Result<MeanEstimate> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::Statistics(format!("need at least 2 samples, got {n}")));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(MeanEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub r2: f64,
    pub intercept: f64,
    /// Range of the regression abscissa.
    pub range: (f64, f64),
    pub points: usize,
}

/// Ordinary least squares of y on x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<ExponentFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Statistics("abscissa and ordinate lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::Statistics(format!("regression needs at least 3 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Statistics("non-finite regression input".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Statistics("degenerate regression range".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = (sse / (n - 2) as f64 / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit {
        slope,
        stderr,
        r2,
        intercept,
        range: (lo, hi),
        points: n,
    })
}

/// Weighted least squares of y on x with weights 1 / var_i. The slope
/// stderr is the propagated one, sqrt(1 / sum w (x - xbar_w)^2).
pub fn weighted_linear_fit(x: &[f64], y: &[f64], var: &[f64]) -> Result<ExponentFit> {
    let n = x.len();
    if n != y.len() || n != var.len() {
        return Err(Error::Statistics("weighted fit inputs differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Statistics(format!("weighted fit needs at least 2 points, got {n}")));
    }
    if var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Statistics("weighted fit needs positive finite variances".into()));
    }
    let w: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - mx) * (y[i] - my)).sum();
    let syy: f64 = w.iter().zip(y).map(|(w, y)| w * (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Statistics("degenerate regression range".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit {
        slope,
        stderr: (1.0 / sxx).sqrt(),
        r2: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
        intercept,
        range: (lo, hi),
        points: n,
    })
}

/// Indices of one bootstrap resample of size n.
pub fn resample(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Geometric ladder from `hi` down to `lo` with `per_decade` points per
/// decade (both ends included).
pub fn geometric_ladder(hi: f64, lo: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && per_decade > 0) {
        return Err(crate::error::domain("geometric ladder needs 0 < lo < hi"));
    }
    let steps = ((hi / lo).log10() * per_decade as f64).round().max(1.0) as usize;
    let ratio = (lo / hi).powf(1.0 / steps as f64);
    Ok((0..=steps).map(|i| if i == steps { lo } else { hi * ratio.powi(i as i32) }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!(f.stderr < 1e-12);
        assert_eq!(f.range, (0.0, 3.0));
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(linear_fit(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Statistics(_))));
        assert!(mean_stderr(&[1.0]).is_err());
    }

    #[test]
    fn ladder_ends() {
        let l = geometric_ladder(0.1, 1e-4, 8).unwrap();
        assert_eq!(l.len(), 25);
        assert_eq!(l[0], 0.1);
        assert_eq!(*l.last().unwrap(), 1e-4);
        assert!(l.windows(2).all(|w| w[1] < w[0]));
    }
}
