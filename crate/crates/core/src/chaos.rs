//! Approximating chaos measures on a grid, their L2 Cauchy statistics, the
//! deterministic second-moment oracle and the K0-tilted rooted measure.

use crate::error::{domain, Error, Result};
use crate::field::container::write_container;
use crate::field::{FieldSample, GridSpec, ScaleLadder};
use crate::kernels::{cov_scalar_at, g_unchecked, KernelParams, TWO_PI2};
use crate::quadrature::{integrate, integrate_adaptive, AdaptiveOptions};
use crate::special::k_all;
use crate::stats::{linear_fit, mean_stderr, resample, ExponentFit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosMeasure {
    pub grid: GridSpec,
    pub level: usize,
    pub eps: f64,
    pub gamma: f64,
    /// Density at the cell center times the cell volume.
    pub cell_mass: Vec<f64>,
}

/// Axis-aligned box [lo, hi]; a cell belongs to it when its center does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl BoxRegion {
    pub fn new(lo: [f64; 4], hi: [f64; 4]) -> Result<Self> {
        if (0..4).any(|i| !(lo[i].is_finite() && hi[i].is_finite() && hi[i] > lo[i])) {
            return Err(domain("box needs lo < hi on every axis"));
        }
        Ok(BoxRegion { lo, hi })
    }

    pub fn of_grid(grid: &GridSpec) -> Self {
        BoxRegion {
            lo: grid.origin,
            hi: grid.upper(),
        }
    }

    pub fn contains(&self, x: &[f64; 4]) -> bool {
        (0..4).all(|i| x[i] >= self.lo[i] && x[i] < self.hi[i])
    }

    pub fn sides(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.hi[i] - self.lo[i])
    }

    pub fn volume(&self) -> f64 {
        self.sides().iter().product()
    }
}

/// Exponent of the density; shared with callers that only need totals.
fn log_density(gamma: f64, value: f64, g: f64) -> f64 {
    gamma * value - 0.5 * gamma * gamma * g
}

const EXP_LIMIT: f64 = 709.0;

pub fn density_field(sample: &FieldSample, level: usize, params: &KernelParams) -> Result<ChaosMeasure> {
    if level == 0 || level > sample.ladder.depth {
        return Err(domain(format!("level {level} outside ladder depth {}", sample.ladder.depth)));
    }
    let eps = sample.ladder.eps(level);
    let g = g_unchecked(eps);
    let vol = sample.grid.cell_volume();
    let mut cell_mass = Vec::with_capacity(sample.grid.len());
    for &v in sample.level(level) {
        let e = log_density(params.gamma, v, g);
        if !e.is_finite() || e > EXP_LIMIT {
            return Err(Error::Overflow(format!(
                "density exponent {e:.1} at level {level}; gamma or grid is misconfigured"
            )));
        }
        cell_mass.push(e.exp() * vol);
    }
    Ok(ChaosMeasure {
        grid: sample.grid.clone(),
        level,
        eps,
        gamma: params.gamma,
        cell_mass,
    })
}

/// The spacing rule for the midpoint discretization: h <= eps_depth / 2.
pub fn spacing_resolves(grid: &GridSpec, ladder: &ScaleLadder) -> bool {
    let finest = ladder.levels[ladder.depth - 1];
    grid.spacing.iter().all(|h| *h <= 0.5 * finest)
}

impl ChaosMeasure {
    pub fn total_mass(&self) -> f64 {
        self.cell_mass.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(&[f64; 4]) -> f64) -> f64 {
        self.cell_mass
            .iter()
            .enumerate()
            .map(|(i, m)| f(&self.grid.center(i)) * m)
            .sum()
    }

    pub fn mass_in(&self, region: &BoxRegion) -> f64 {
        self.integrate(|x| if region.contains(x) { 1.0 } else { 0.0 })
    }

    /// Mass of a set of cells given by index; duplicates are counted once.
    pub fn mass_of_cells(&self, cells: &[usize]) -> f64 {
        let mut idx = cells.to_vec();
        idx.sort_unstable();
        idx.dedup();
        idx.iter().map(|&i| self.cell_mass[i]).sum()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "cell,x0,x1,x2,x3,mass")?;
        for (i, m) in self.cell_mass.iter().enumerate() {
            let c = self.grid.center(i);
            writeln!(w, "{i},{},{},{},{},{m:e}", c[0], c[1], c[2], c[3])?;
        }
        Ok(())
    }

    pub fn write_container(&self, w: &mut impl Write) -> Result<()> {
        let header = json!({
            "kind": "chaos_measure",
            "grid": self.grid,
            "level": self.level,
            "eps": self.eps,
            "gamma": self.gamma,
        });
        write_container(w, &header, &self.cell_mass)
    }
}

/// Per-cell masses on a grid; shared view of plain and tilted measures.
pub trait CellMasses {
    fn grid(&self) -> &GridSpec;
    fn masses(&self) -> &[f64];
}

impl CellMasses for ChaosMeasure {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn masses(&self) -> &[f64] {
        &self.cell_mass
    }
}

impl CellMasses for TiltedMeasure {
    fn grid(&self) -> &GridSpec {
        &self.base.grid
    }
    fn masses(&self) -> &[f64] {
        &self.cell_mass
    }
}

/// Total mass of `region` at every ladder level of one sample.
pub fn level_masses(sample: &FieldSample, region: &BoxRegion, params: &KernelParams) -> Result<Vec<f64>> {
    let inside: Vec<usize> = (0..sample.grid.len())
        .filter(|&i| region.contains(&sample.grid.center(i)))
        .collect();
    let vol = sample.grid.cell_volume();
    (1..=sample.ladder.depth)
        .map(|n| {
            let g = g_unchecked(sample.ladder.eps(n));
            let vals = sample.level(n);
            let mut total = 0.0;
            for &i in &inside {
                let e = log_density(params.gamma, vals[i], g);
                if !e.is_finite() || e > EXP_LIMIT {
                    return Err(Error::Overflow(format!("density exponent {e:.1} at level {n}")));
                }
                total += e.exp();
            }
            Ok(total * vol)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Cauchy decay

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyLevel {
    /// Difference between levels n + 1 and n.
    pub n: usize,
    pub g_eps: f64,
    pub second_moment: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyStats {
    pub levels: Vec<CauchyLevel>,
    /// Fit of log E[diff^2] against G(eps_n); the decay rate is -slope.
    pub decay: Option<ExponentFit>,
    /// Mean of the partial series sum_n |m_{n+1} - m_n| (diagnostic only).
    pub partial_series: f64,
}

impl CauchyStats {
    pub fn rate(&self) -> Option<f64> {
        self.decay.map(|f| -f.slope)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].second_moment < w[0].second_moment)
    }
}

pub const MIN_CAUCHY_REPLICAS: usize = 100;

fn diff_moments(totals: &[Vec<f64>], idx: &[usize], depth: usize) -> Vec<f64> {
    (0..depth - 1)
        .map(|n| idx.iter().map(|&r| (totals[r][n + 1] - totals[r][n]).powi(2)).sum::<f64>() / idx.len() as f64)
        .collect()
}

/// `totals[r][n]` is the mass of the region in replica r at level n + 1.
pub fn cauchy_decay_stats(totals: &[Vec<f64>], ladder: &ScaleLadder) -> Result<CauchyStats> {
    if totals.len() < MIN_CAUCHY_REPLICAS {
        return Err(Error::Statistics(format!(
            "Cauchy statistics need at least {MIN_CAUCHY_REPLICAS} replicas, got {}",
            totals.len()
        )));
    }
    if ladder.depth < 3 {
        return Err(Error::Statistics("Cauchy statistics need ladder depth >= 3".into()));
    }
    if totals.iter().any(|t| t.len() != ladder.depth) {
        return Err(Error::Statistics("every replica needs one total per level".into()));
    }
    let mut levels = Vec::new();
    for n in 0..ladder.depth - 1 {
        let d2: Vec<f64> = totals.iter().map(|t| (t[n + 1] - t[n]).powi(2)).collect();
        let est = mean_stderr(&d2)?;
        levels.push(CauchyLevel {
            n: n + 1,
            g_eps: g_unchecked(ladder.eps(n + 1)),
            second_moment: est.mean,
            stderr: est.stderr,
        });
    }
    let usable: Vec<&CauchyLevel> = levels.iter().filter(|l| l.second_moment > 0.0).collect();
    let decay = if usable.len() >= 3 {
        let x: Vec<f64> = usable.iter().map(|l| l.g_eps).collect();
        let y: Vec<f64> = usable.iter().map(|l| l.second_moment.ln()).collect();
        Some(linear_fit(&x, &y)?)
    } else {
        None
    };
    let partial_series = totals
        .iter()
        .map(|t| t.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>())
        .sum::<f64>()
        / totals.len() as f64;
    Ok(CauchyStats {
        levels,
        decay,
        partial_series,
    })
}

/// Fraction of bootstrap resamples in which the difference second moments
/// are strictly decreasing in n.
pub fn bootstrap_monotone_fraction(totals: &[Vec<f64>], resamples: usize, seed: u64) -> Result<f64> {
    let depth = totals.first().map(|t| t.len()).unwrap_or(0);
    if totals.len() < 2 || depth < 3 || resamples == 0 {
        return Err(Error::Statistics("bootstrap needs replicas, depth >= 3 and resamples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(seed, 0));
    let mut hits = 0;
    for _ in 0..resamples {
        let idx = resample(totals.len(), &mut rng);
        let m = diff_moments(totals, &idx, depth);
        if m.windows(2).all(|w| w[1] < w[0]) {
            hits += 1;
        }
    }
    Ok(hits as f64 / resamples as f64)
}

// ---------------------------------------------------------------------------
// Second-moment oracle

/// Integral over the circle of radius rho of tent(u1) tent(u2), where
/// tent_i(u) = (L_i - |u|)_+ is the difference density of a side L_i.
fn tent_pair(rho: f64, l1: f64, l2: f64) -> f64 {
    if rho == 0.0 {
        return 2.0 * PI * l1 * l2;
    }
    let ta = (l1 / rho).min(1.0).acos();
    let tb = (l2 / rho).min(1.0).asin();
    if ta >= tb {
        return 0.0;
    }
    let v = l1 * l2 * (tb - ta) - l1 * rho * (ta.cos() - tb.cos()) - l2 * rho * (tb.sin() - ta.sin())
        + 0.5 * rho * rho * (tb.sin().powi(2) - ta.sin().powi(2));
    4.0 * v
}

/// Weight of |x - y| = s for x, y uniform on the box (unnormalized):
/// the integral of prod tent_i over the sphere of radius s.
fn shell_weight(s: f64, sides: &[f64; 4]) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let [l1, l2, l3, l4] = *sides;
    let f = |a: f64| a.cos() * a.sin() * tent_pair(s * a.cos(), l1, l2) * tent_pair(s * a.sin(), l3, l4);
    let mut breaks = vec![0.0, 0.5 * PI];
    for l in [l1, l2, l1.hypot(l2)] {
        if l < s {
            breaks.push((l / s).acos());
        }
    }
    for l in [l3, l4, l3.hypot(l4)] {
        if l < s {
            breaks.push((l / s).asin());
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = 4.0 * PI * PI * l1 * l2 * l3 * l4;
    let (v, _) = integrate_adaptive(
        |a| [f(a)],
        &breaks,
        [1.0],
        AdaptiveOptions {
            abs_tol: 1e-12 * scale,
            ..Default::default()
        },
    )?;
    Ok(s.powi(3) * v[0])
}

/// E[m_eps(box)^2] = double integral over the box of exp(gamma^2 c(|x - y|)),
/// reduced to a radial integral against the shell weight of the box.
pub fn second_moment_oracle(region: &BoxRegion, eps: f64, gamma: f64) -> Result<f64> {
    if !(eps > 0.0 && gamma.is_finite() && gamma >= 0.0) {
        return Err(domain("second-moment oracle needs eps > 0 and gamma >= 0"));
    }
    let sides = region.sides();
    let vol = region.volume();
    let g2 = gamma * gamma;
    let phi = |s: f64| -> Result<f64> { Ok((g2 * cov_scalar_at(s, eps, eps)?).exp()) };
    let diam = sides.iter().map(|l| l * l).sum::<f64>().sqrt();
    let mut breaks = vec![0.0, diam];
    if 2.0 * eps < diam {
        breaks.push(2.0 * eps);
    }
    for mask in 1u32..15 {
        let s: f64 = (0..4).filter(|i| mask & (1 << i) != 0).map(|i| sides[i] * sides[i]).sum::<f64>().sqrt();
        breaks.push(s);
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * diam);
    let peak = (g2 * g_unchecked(eps)).exp();
    let mut failure = None;
    let (v, _) = integrate_adaptive(
        |s| match (phi(s), shell_weight(s, &sides)) {
            (Ok(p), Ok(w)) => [p * w],
            (Err(e), _) | (_, Err(e)) => {
                failure.get_or_insert(e);
                [0.0]
            }
        },
        &breaks,
        [1.0],
        AdaptiveOptions {
            abs_tol: 1e-6 * vol * vol * peak,
            max_panels: 20_000,
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(v[0])
}

/// Discrete counterpart of the oracle for the midpoint measure on a grid:
/// the sum over cell pairs of h^8 exp(gamma^2 c(|x_i - x_j|)).
pub fn second_moment_discrete(grid: &GridSpec, region: &BoxRegion, eps: f64, gamma: f64) -> Result<f64> {
    let cells: Vec<[f64; 4]> = (0..grid.len()).map(|i| grid.center(i)).filter(|c| region.contains(c)).collect();
    let mut cache = std::collections::HashMap::new();
    let mut total = 0.0;
    for a in &cells {
        for b in &cells {
            let d2: f64 = (0..4).map(|k| (a[k] - b[k]).powi(2)).sum();
            let key = d2.to_bits();
            let v = match cache.get(&key) {
                Some(v) => *v,
                None => {
                    let v = (gamma * gamma * cov_scalar_at(d2.sqrt(), eps, eps)?).exp();
                    cache.insert(key, v);
                    v
                }
            };
            total += v;
        }
    }
    Ok(total * grid.cell_volume().powi(2))
}

// ---------------------------------------------------------------------------
// Tilted measure

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltedMeasure {
    pub base: ChaosMeasure,
    pub root: [f64; 4],
    pub root_cell: usize,
    pub multiplier: Vec<f64>,
    pub cell_mass: Vec<f64>,
}

impl TiltedMeasure {
    pub fn total_mass(&self) -> f64 {
        self.cell_mass.iter().sum()
    }
}

/// exp((gamma^2 / 2 pi^2) K0(d)).
pub fn tilt_factor(d: f64, gamma: f64) -> f64 {
    (gamma * gamma / TWO_PI2 * k_all(d)[0]).exp()
}

/// Average of the tilt factor over the 4-ball of the given volume centered
/// at the root. The singularity of K0 at 0 is integrable.
pub fn root_cell_factor(volume: f64, gamma: f64) -> Result<f64> {
    if gamma == 0.0 {
        return Ok(1.0);
    }
    let rho = (2.0 * volume / (PI * PI)).powf(0.25);
    // substituting s = rho u turns the ball average into 4 * int_0^1 u^3 f(rho u) du
    let v = integrate(
        |u| if u == 0.0 { 0.0 } else { u.powi(3) * tilt_factor(rho * u, gamma) },
        0.0,
        1.0,
        1e-13 * tilt_factor(rho, gamma),
    )?;
    Ok(4.0 * v)
}

pub fn tilt(measure: &ChaosMeasure, root: [f64; 4], params: &KernelParams) -> Result<TiltedMeasure> {
    let root_cell = measure
        .grid
        .locate(&root)
        .ok_or_else(|| domain("tilt root must lie inside the grid"))?;
    let gamma = params.gamma;
    let root_factor = root_cell_factor(measure.grid.cell_volume(), gamma)?;
    let multiplier: Vec<f64> = (0..measure.grid.len())
        .map(|i| {
            if i == root_cell {
                root_factor
            } else {
                tilt_factor(crate::kernels::distance(&root, &measure.grid.center(i)), gamma)
            }
        })
        .collect();
    let cell_mass = measure.cell_mass.iter().zip(&multiplier).map(|(m, f)| m * f).collect();
    Ok(TiltedMeasure {
        base: measure.clone(),
        root,
        root_cell,
        multiplier,
        cell_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tent_pair_matches_quadrature() {
        for &(rho, l1, l2) in &[(0.3, 1.0, 1.0), (1.2, 1.0, 0.5), (0.7, 0.5, 1.0), (1.5, 1.0, 1.0)] {
            let tent = |u: f64, l: f64| (l - u.abs()).max(0.0);
            let n = 200_000;
            let h = 2.0 * PI / n as f64;
            let q: f64 = (0..n)
                .map(|k| {
                    let t = (k as f64 + 0.5) * h;
                    tent(rho * t.cos(), l1) * tent(rho * t.sin(), l2)
                })
                .sum::<f64>()
                * h;
            assert!((tent_pair(rho, l1, l2) - q).abs() < 1e-8, "{rho} {l1} {l2}");
        }
    }

    #[test]
    fn oracle_reduces_to_volume_squared() {
        let b = BoxRegion::new([0.0; 4], [0.5, 0.25, 0.5, 1.0]).unwrap();
        let v = second_moment_oracle(&b, 0.25, 0.0).unwrap();
        assert!((v / b.volume().powi(2) - 1.0).abs() < 1e-7, "{v}");
    }

    #[test]
    fn root_factor_is_finite_and_above_center_value() {
        let f = root_cell_factor(1e-4, PI).unwrap();
        let rho = (2.0 * 1e-4 / (PI * PI)).powf(0.25);
        assert!(f.is_finite());
        assert!(f > tilt_factor(rho, PI));
        assert_eq!(root_cell_factor(1e-4, 0.0).unwrap(), 1.0);
    }
}
