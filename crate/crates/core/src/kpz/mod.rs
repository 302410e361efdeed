//! Scaling exponents and the KPZ relation: fractal test sets, the Euclidean
//! exponent, the exact stopping-time route, the empirical isothermal route,
//! the conditional-mean profile and the tail experiment.

pub mod empirical;
pub mod profile;
pub mod stopping;

use crate::error::{domain, Result};
use crate::stats::{linear_fit, ExponentFit};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub use empirical::{closed_ball_masses, quantum_exponent_empirical, r_lambda, EmpiricalRun, RLambda};
pub use profile::{
    ball_radius_unit_tilted, cond_mean_profile, tail_grid, tail_probability_experiment, tilted_ball_mass, CondMean, TailParams,
    TailRow, TailRun,
};
pub use stopping::{
    exact_from_run, mgf_check, mgf_exponent, quantum_exponent_exact, simulate_ladder, simulate_stopping_time, ExactRoute,
    MgfRow, StoppingRun, StoppingRunParams,
};

const SIXTEEN_PI2: f64 = 16.0 * PI * PI;

/// kappa = K (1 - gamma^2 / 16 pi^2) + (gamma^2 / 16 pi^2) K^2.
pub fn kpz_quadratic(k: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&k) {
        return Err(domain(format!("K must lie in [0,1], got {k}")));
    }
    let a = gamma * gamma / SIXTEEN_PI2;
    Ok(k * (1.0 - a) + a * k * k)
}

/// Root in [0,1] of the KPZ quadratic, written without cancellation.
pub fn kpz_inverse(kappa: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(domain(format!("kappa must lie in [0,1], got {kappa}")));
    }
    let a = gamma * gamma / SIXTEEN_PI2;
    let b = 1.0 - a;
    Ok(2.0 * kappa / (b + (b * b + 4.0 * a * kappa).sqrt()))
}

// ---------------------------------------------------------------------------
// Fractal test sets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FractalSpec {
    Point { at: [f64; 4] },
    Ball { center: [f64; 4], radius: f64 },
    /// Square [o0, o0 + side] x [o1, o1 + side] x {o2} x {o3}.
    PlanePatch { origin: [f64; 4], side: f64 },
    /// Product of four middle-type Cantor sets on [o_i, o_i + side]: each
    /// stage keeps the two outer pieces of relative length `ratio`.
    ProductCantor { origin: [f64; 4], side: f64, ratio: f64, depth: u32 },
}

impl FractalSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64; 4]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            FractalSpec::Point { at } => finite(at),
            FractalSpec::Ball { center, radius } => finite(center) && *radius > 0.0,
            FractalSpec::PlanePatch { origin, side } => finite(origin) && *side > 0.0,
            FractalSpec::ProductCantor { origin, side, ratio, depth } => {
                finite(origin) && *side > 0.0 && *ratio > 0.0 && *ratio < 0.5 && *depth >= 1 && *depth <= 16
            }
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid fractal spec {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FractalSpec::Point { .. } => "point",
            FractalSpec::Ball { .. } => "ball",
            FractalSpec::PlanePatch { .. } => "plane_patch",
            FractalSpec::ProductCantor { .. } => "product_cantor",
        }
    }

    /// Analytic Euclidean exponent. For the Cantor product this is the value
    /// at scales above the finest stage.
    pub fn kappa(&self) -> f64 {
        match self {
            FractalSpec::Point { .. } => 1.0,
            FractalSpec::Ball { .. } => 0.0,
            FractalSpec::PlanePatch { .. } => 0.5,
            FractalSpec::ProductCantor { ratio, .. } => 1.0 - 2f64.ln() / (1.0 / ratio).ln(),
        }
    }

    /// Per-axis interval unions for product sets; None for the ball.
    pub fn axis_sets(&self) -> Option<[Vec<(f64, f64)>; 4]> {
        match self {
            FractalSpec::Point { at } => Some(std::array::from_fn(|i| vec![(at[i], at[i])])),
            FractalSpec::Ball { .. } => None,
            FractalSpec::PlanePatch { origin, side } => Some(std::array::from_fn(|i| {
                if i < 2 {
                    vec![(origin[i], origin[i] + side)]
                } else {
                    vec![(origin[i], origin[i])]
                }
            })),
            FractalSpec::ProductCantor { origin, side, ratio, depth } => {
                let base = cantor_intervals(*ratio, *depth);
                Some(std::array::from_fn(|i| {
                    base.iter().map(|(a, b)| (origin[i] + side * a, origin[i] + side * b)).collect()
                }))
            }
        }
    }

    /// Exact Euclidean distance from x to the set.
    pub fn distance(&self, x: &[f64; 4]) -> f64 {
        match self {
            FractalSpec::Ball { center, radius } => (crate::kernels::distance(x, center) - radius).max(0.0),
            _ => {
                let sets = self.axis_sets().expect("product set");
                (0..4).map(|i| interval_set_distance(&sets[i], x[i]).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    /// Whether the closed box [lo, hi] meets the set.
    pub fn meets_box(&self, lo: &[f64; 4], hi: &[f64; 4]) -> bool {
        match self {
            FractalSpec::Ball { center, radius } => {
                let d2: f64 = (0..4).map(|i| (center[i] - center[i].clamp(lo[i], hi[i])).powi(2)).sum();
                d2 <= radius * radius
            }
            _ => {
                let sets = self.axis_sets().expect("product set");
                (0..4).all(|i| sets[i].iter().any(|&(a, b)| a <= hi[i] && b >= lo[i]))
            }
        }
    }
}

/// Stage-`depth` intervals of the Cantor set on [0,1].
pub fn cantor_intervals(ratio: f64, depth: u32) -> Vec<(f64, f64)> {
    let mut cur = vec![(0.0, 1.0)];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(cur.len() * 2);
        for (a, b) in cur {
            let l = (b - a) * ratio;
            next.push((a, a + l));
            next.push((b - l, b));
        }
        cur = next;
    }
    cur
}

/// Distance from u to a sorted union of disjoint closed intervals.
fn interval_set_distance(set: &[(f64, f64)], u: f64) -> f64 {
    let k = set.partition_point(|&(a, _)| a <= u);
    let mut d = f64::INFINITY;
    if k > 0 {
        d = (u - set[k - 1].1).max(0.0);
    }
    if k < set.len() {
        d = d.min(set[k].0 - u);
    }
    d
}

// ---------------------------------------------------------------------------
// Euclidean exponent

/// Cells per unit lambda when tabulating the one-axis distance law.
const DIST_CELLS: usize = 256;
/// Ball grid resolution: cells per radius.
const BALL_CELLS_PER_RADIUS: f64 = 200.0;

/// (value, weight) lists whose pairwise sums are counted against lambda^2.
type Weighted = Vec<(f64, f64)>;

/// Law of the squared distance to a 1-D interval union, restricted to
/// distances below lambda: an atom at 0 with the total length, and the
/// density 2 + 2 #{gaps wider than 2t} tabulated on fine cells.
fn axis_law(set: &[(f64, f64)], lambda: f64) -> Weighted {
    let length: f64 = set.iter().map(|(a, b)| b - a).sum();
    let gaps: Vec<f64> = set.windows(2).map(|w| w[1].0 - w[0].1).collect();
    let h = lambda / DIST_CELLS as f64;
    let mut out = Vec::with_capacity(DIST_CELLS + 1);
    if length > 0.0 {
        out.push((0.0, length));
    }
    for j in 0..DIST_CELLS {
        let lo = j as f64 * h;
        let w = 2.0 * h + gaps.iter().map(|g| 2.0 * (0.5 * g - lo).clamp(0.0, h)).sum::<f64>();
        let t = lo + 0.5 * h;
        out.push((t * t, w));
    }
    out
}

fn pair_sums(a: &Weighted, b: &Weighted) -> Weighted {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &(x, wx) in a {
        for &(y, wy) in b {
            out.push((x + y, wx * wy));
        }
    }
    out.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    out
}

/// Weight of {(p, q) : p + q < limit} by a two-pointer sweep over sorted lists.
fn count_below(p: &Weighted, q: &Weighted, limit: f64) -> f64 {
    let mut cum = Vec::with_capacity(q.len() + 1);
    cum.push(0.0);
    for &(_, w) in q {
        cum.push(cum.last().unwrap() + w);
    }
    let mut k = q.len();
    let mut total = 0.0;
    for &(x, wx) in p {
        while k > 0 && x + q[k - 1].0 >= limit {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        total += wx * cum[k];
    }
    total
}

/// vol(D_lambda) for the spec, by fine-grid counting.
pub fn neighborhood_volume(spec: &FractalSpec, lambda: f64) -> Result<f64> {
    spec.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain("lambda must be positive"));
    }
    match spec {
        FractalSpec::Ball { radius, .. } => {
            let h = radius / BALL_CELLS_PER_RADIUS;
            let reach = radius + lambda;
            let k = (reach / h).ceil() as i64;
            let axis: Weighted = (-k..k).map(|i| (((i as f64 + 0.5) * h).powi(2), h)).collect();
            let p = pair_sums(&axis, &axis);
            Ok(count_below(&p, &p, reach * reach))
        }
        _ => {
            let sets = spec.axis_sets().expect("product set");
            let laws: Vec<Weighted> = sets.iter().map(|s| axis_law(s, lambda)).collect();
            let p = pair_sums(&laws[0], &laws[1]);
            let q = pair_sums(&laws[2], &laws[3]);
            Ok(count_below(&p, &q, lambda * lambda))
        }
    }
}

/// Regression of log vol(D_lambda) on log lambda^4; the slope estimates kappa.
pub fn euclidean_exponent(spec: &FractalSpec, lambdas: &[f64]) -> Result<ExponentFit> {
    let mut x = Vec::with_capacity(lambdas.len());
    let mut y = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        x.push(4.0 * l.ln());
        y.push(neighborhood_volume(spec, l)?.ln());
    }
    linear_fit(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_examples() {
        let g = PI;
        assert_eq!(kpz_quadratic(0.0, g).unwrap(), 0.0);
        assert!((kpz_quadratic(1.0, g).unwrap() - 1.0).abs() < 1e-15);
        assert!((kpz_quadratic(0.5, g).unwrap() - 0.484375).abs() < 1e-15);
        assert!((kpz_inverse(0.484375, g).unwrap() - 0.5).abs() < 1e-14);
        assert!(kpz_inverse(1.5, g).is_err());
    }

    #[test]
    fn interval_distance() {
        let s = vec![(0.0, 1.0), (2.0, 3.0)];
        assert_eq!(interval_set_distance(&s, 0.5), 0.0);
        assert_eq!(interval_set_distance(&s, 1.25), 0.25);
        assert_eq!(interval_set_distance(&s, 1.75), 0.25);
        assert_eq!(interval_set_distance(&s, -1.0), 1.0);
        assert_eq!(interval_set_distance(&s, 4.0), 1.0);
    }

    #[test]
    fn point_volume_is_four_ball() {
        let spec = FractalSpec::Point { at: [0.5; 4] };
        let l = 0.01;
        let v = neighborhood_volume(&spec, l).unwrap();
        let exact = 0.5 * PI * PI * l.powi(4);
        assert!((v / exact - 1.0).abs() < 0.02, "{v} {exact}");
    }

    #[test]
    fn plane_volume_leading_term() {
        // area times the 2-D disc of radius lambda, plus edge terms
        let spec = FractalSpec::PlanePatch { origin: [0.0; 4], side: 1.0 };
        let l = 1e-4;
        let v = neighborhood_volume(&spec, l).unwrap();
        assert!((v / (PI * l * l) - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn cantor_intervals_shape() {
        let c = cantor_intervals(1.0 / 3.0, 2);
        assert_eq!(c.len(), 4);
        assert!((c[1].0 - 2.0 / 9.0).abs() < 1e-15);
    }
}
