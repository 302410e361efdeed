//! Conditional mean of the rooted ball mass given X_t, and the tail
//! experiment for the rooted mass of the unit-tilted-volume ball.

use crate::chaos::{root_cell_factor, tilt_factor, ChaosMeasure, TiltedMeasure};
use crate::error::{domain, Error, Result};
use crate::field::GridSpec;
use crate::kernels::{denom, denom_reduced, g_inverse, g_variance, TWO_PI2};
use crate::quadrature::integrate;
use crate::special::{i_all, i_reduced, k_all};
use crate::stats::{weighted_linear_fit, ExponentFit};
use serde::{Deserialize, Serialize};

const EIGHT_PI2: f64 = 4.0 * TWO_PI2;
const FOUR_PI2: f64 = 2.0 * TWO_PI2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondMean {
    pub t: f64,
    /// r(t) = G^{-1}(t + G(R)).
    pub radius: f64,
    pub log_cond_mean: f64,
    /// log of exp(gamma X_t - (8 pi^2 - gamma^2 / 2) t).
    pub log_approx: f64,
}

impl CondMean {
    pub fn ratio(&self) -> f64 {
        (self.log_cond_mean - self.log_approx).exp()
    }
}

/// E[rooted mass of B_{r(t)} | X_t] by radial quadrature, in log space so
/// that radii far below the f64 range of r^4 stay usable.
pub fn cond_mean_profile(t: f64, r_ref: f64, gamma: f64, xt: f64) -> Result<CondMean> {
    if !(t > 0.0 && t.is_finite() && r_ref > 0.0 && xt.is_finite()) {
        return Err(domain("cond_mean_profile needs t > 0, R > 0 and finite X_t"));
    }
    let r = g_inverse(t + g_variance(r_ref)?)?;
    let c = gamma * gamma / TWO_PI2;
    let dr = denom_reduced(r);
    let d_ref = denom(r_ref);
    // I0(ur) - I2(ur) P(t), with P(t) = (1/D(r) - 1/D(R)) / (4 pi^2 t)
    let a = |u: f64| -> f64 {
        let rho = u * r;
        let i = i_all(rho);
        let i2_over_dr = 0.25 * i_reduced(2, rho) * u * u / dr;
        i[0] - (i2_over_dr - i[2] / d_ref) / (FOUR_PI2 * t)
    };
    let log_f = |u: f64| -> f64 {
        let av = a(u);
        3.0 * u.ln() + c * k_all(u * r)[0] + gamma * xt * av - 0.5 * gamma * gamma * t * av * av
    };
    let peak = log_f(1.0);
    let v = integrate(
        |u| if u == 0.0 { 0.0 } else { (log_f(u) - peak).exp() },
        0.0,
        1.0,
        1e-12,
    )?;
    if !(v > 0.0) {
        return Err(Error::Quadrature {
            estimate: v,
            tolerance: 1e-12,
            context: "conditional-mean integrand vanished".into(),
        });
    }
    // dy = 2 pi^2 rho^3 d rho with rho = u r
    let log_cond_mean = TWO_PI2.ln() + 4.0 * r.ln() + peak + v.ln();
    Ok(CondMean {
        t,
        radius: r,
        log_cond_mean,
        log_approx: gamma * xt - (EIGHT_PI2 - 0.5 * gamma * gamma) * t,
    })
}

// ---------------------------------------------------------------------------
// Tail experiment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailParams {
    pub delta: f64,
    pub rho: f64,
    pub a_grid: Vec<f64>,
}

impl TailParams {
    pub fn validate(&self, gamma: f64) -> Result<()> {
        let g2 = gamma * gamma;
        if !(self.delta > 0.0 && self.delta < FOUR_PI2 - 2.0 * g2) {
            return Err(domain(format!("delta must lie in (0, 4 pi^2 - 2 gamma^2), got {}", self.delta)));
        }
        let lo = (FOUR_PI2 + g2) / (EIGHT_PI2 - g2 - self.delta);
        if !(self.rho > lo && self.rho < 1.0) {
            return Err(domain(format!("rho must lie in ({lo:.4}, 1), got {}", self.rho)));
        }
        if self.a_grid.is_empty() || self.a_grid[0] <= 0.0 || self.a_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("the A grid must be positive and increasing"));
        }
        Ok(())
    }

    /// (2 rho / gamma)(8 pi^2 - gamma^2 - gamma^2 / rho - delta).
    pub fn bound_rate(&self, gamma: f64) -> f64 {
        let g2 = gamma * gamma;
        2.0 * self.rho / gamma * (EIGHT_PI2 - g2 - g2 / self.rho - self.delta)
    }
}

/// Radius of the ball about 0 with unit volume under exp((gamma^2/2pi^2) K0(|y|)) dy.
pub fn ball_radius_unit_tilted(gamma: f64) -> Result<f64> {
    let volume = |r: f64| -> Result<f64> {
        // 2 pi^2 r^4 int_0^1 u^3 f(r u) du
        let v = integrate(
            |u| if u == 0.0 { 0.0 } else { u.powi(3) * tilt_factor(r * u, gamma) },
            0.0,
            1.0,
            1e-14 * tilt_factor(r, gamma),
        )?;
        Ok(TWO_PI2 * r.powi(4) * v)
    };
    let (mut lo, mut hi) = (1e-3, 2.0);
    if volume(lo)? >= 1.0 || volume(hi)? <= 1.0 {
        return Err(Error::Range("unit tilted volume radius outside [1e-3, 2]".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if volume(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Odd n x n x n x n grid centered on the origin that covers the ball of
/// radius `radius`; the origin is the center of the middle cell.
pub fn tail_grid(radius: f64, n: usize) -> Result<GridSpec> {
    if n % 2 == 0 || n < 3 {
        return Err(domain("the tail grid needs an odd extent >= 3"));
    }
    let side = 2.0 * radius * (1.0 + 1.0 / n as f64);
    GridSpec::cube([-0.5 * side; 4], side, n)
}

/// Rooted mass of the closed ball |y| <= radius about the origin; the root
/// cell carries the ball-averaged tilt.
pub fn tilted_ball_mass(measure: &ChaosMeasure, radius: f64, gamma: f64) -> Result<f64> {
    let root = measure
        .grid
        .locate(&[0.0; 4])
        .ok_or_else(|| domain("the tail grid must contain the origin"))?;
    let root_factor = root_cell_factor(measure.grid.cell_volume(), gamma)?;
    let mut total = 0.0;
    for (i, m) in measure.cell_mass.iter().enumerate() {
        let c = measure.grid.center(i);
        let d = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if i == root {
            total += m * root_factor;
        } else if d <= radius {
            total += m * tilt_factor(d, gamma);
        }
    }
    Ok(total)
}

/// Same quantity from an already tilted measure.
pub fn tilted_mass_within(measure: &TiltedMeasure, radius: f64) -> f64 {
    let g = &measure.base.grid;
    measure
        .cell_mass
        .iter()
        .enumerate()
        .filter(|(i, _)| *i == measure.root_cell || crate::kernels::distance(&measure.root, &g.center(*i)) <= radius)
        .map(|(_, m)| m)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub a: f64,
    pub threshold: f64,
    pub count: usize,
    pub prob: f64,
    pub stderr: f64,
    /// log of the bound's decay factor exp(-rate A), up to the constant C.
    pub bound_log: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRun {
    pub rows: Vec<TailRow>,
    pub bound_rate: f64,
    /// Weighted fit of log prob on A over rows with 0 < count < n.
    pub fit: Option<ExponentFit>,
    /// A values whose counts were zero (censored; the bound holds trivially).
    pub censored: Vec<f64>,
}

impl TailRun {
    pub fn mc_rate(&self) -> Option<f64> {
        self.fit.map(|f| -f.slope)
    }

    /// MC rate >= bound rate - 2 standard errors of the fitted rate.
    pub fn decays_fast_enough(&self) -> bool {
        match self.fit {
            Some(f) => -f.slope >= self.bound_rate - 2.0 * f.stderr,
            None => false,
        }
    }
}

/// Tail probabilities P(rooted mass <= e^{-A gamma}) from per-replica masses.
pub fn tail_probability_experiment(params: &TailParams, gamma: f64, masses: &[f64]) -> Result<TailRun> {
    params.validate(gamma)?;
    let n = masses.len();
    if n < 2 {
        return Err(Error::Statistics("the tail experiment needs at least 2 replicas".into()));
    }
    let rate = params.bound_rate(gamma);
    let mut rows = Vec::new();
    let mut censored = Vec::new();
    let (mut x, mut y, mut var) = (vec![], vec![], vec![]);
    for &a in &params.a_grid {
        let threshold = (-a * gamma).exp();
        let count = masses.iter().filter(|m| **m <= threshold).count();
        let p = count as f64 / n as f64;
        rows.push(TailRow {
            a,
            threshold,
            count,
            prob: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            bound_log: -rate * a,
        });
        if count == 0 {
            censored.push(a);
        } else if count < n {
            x.push(a);
            y.push(p.ln());
            // delta method: Var(log p_hat) = (1 - p) / (n p)
            var.push((1.0 - p) / (n as f64 * p));
        }
    }
    let fit = if x.len() >= 2 { Some(weighted_linear_fit(&x, &y, &var)?) } else { None };
    Ok(TailRun {
        rows,
        bound_rate: rate,
        fit,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn tail_params_validity() {
        let p = TailParams {
            delta: PI * PI,
            rho: 0.9,
            a_grid: vec![0.1, 0.2],
        };
        p.validate(PI).unwrap();
        assert!(p.bound_rate(PI) > 0.0);
        let bad = TailParams { rho: 0.8, ..p.clone() };
        assert!(bad.validate(PI).is_err());
    }

    #[test]
    fn unit_tilted_ball() {
        let g = PI;
        let r = ball_radius_unit_tilted(g).unwrap();
        // tilting adds mass, so the ball is smaller than the Lebesgue unit ball
        let lebesgue = (2.0 / (PI * PI)).powf(0.25);
        assert!(r < lebesgue && r > 0.5 * lebesgue, "{r}");
    }

    #[test]
    fn cond_mean_is_positive() {
        for t in [0.5, 5.0, 20.0] {
            let c = cond_mean_profile(t, 1.0, PI, 0.3).unwrap();
            assert!(c.log_cond_mean.is_finite() && c.log_approx.is_finite());
            assert!(c.ratio() > 0.0);
        }
    }
}
