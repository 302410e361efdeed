//! The empirical route: grid-resolved mass radii and isothermal
//! neighborhoods of a fractal under the deepest-level chaos measure.

use super::FractalSpec;
use crate::chaos::CellMasses;
use crate::error::{domain, Error, Result};
use crate::field::GridSpec;
use crate::stats::{linear_fit, mean_stderr, ExponentFit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RLambda {
    pub radius: f64,
    /// Lambda exceeded the total mass; the radius is capped at the grid diameter.
    pub capped: bool,
}

/// sup{r : m(B_r(x)) <= Lambda} over open balls, resolved at the cell
/// centers: the distance of the first cell whose inclusion would exceed
/// Lambda, or 0 when the nearest cell alone does.
pub fn r_lambda(measure: &impl CellMasses, x: &[f64; 4], lambda: f64) -> Result<RLambda> {
    let grid = measure.grid();
    if grid.locate(x).is_none() {
        return Err(domain("r_lambda needs x inside the grid"));
    }
    if !(lambda > 0.0) {
        return Err(domain("Lambda must be positive"));
    }
    let mut cells: Vec<(f64, f64)> = measure
        .masses()
        .iter()
        .enumerate()
        .map(|(i, m)| (crate::kernels::distance(x, &grid.center(i)), *m))
        .collect();
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut cum = 0.0;
    for (k, &(d, m)) in cells.iter().enumerate() {
        cum += m;
        if cum > lambda {
            let radius = if k == 0 { 0.0 } else { d };
            return Ok(RLambda { radius, capped: false });
        }
    }
    Ok(RLambda {
        radius: grid.diameter(),
        capped: true,
    })
}

/// Lattice offsets sorted by physical length.
fn sorted_offsets(grid: &GridSpec) -> Vec<(f64, [i32; 4])> {
    let n = grid.extent.map(|e| e as i32);
    let mut out = Vec::new();
    for a in -(n[0] - 1)..n[0] {
        for b in -(n[1] - 1)..n[1] {
            for c in -(n[2] - 1)..n[2] {
                for d in -(n[3] - 1)..n[3] {
                    let k = [a, b, c, d];
                    let d2: f64 = (0..4).map(|i| (k[i] as f64 * grid.spacing[i]).powi(2)).sum();
                    out.push((d2, k));
                }
            }
        }
    }
    out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    out
}

/// For every cell x, the mass of the closed ball of radius `radii[x]` about
/// its center (cells whose centers lie within it). Sums are abandoned once
/// they exceed `cap` and reported as +inf.
pub fn closed_ball_masses(grid: &GridSpec, masses: &[f64], radii: &[f64], cap: f64) -> Vec<f64> {
    let offsets = sorted_offsets(grid);
    let ext = grid.extent.map(|e| e as i32);
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let m = grid.multi_index(i).map(|v| v as i32);
            let r2 = radii[i] * radii[i] * (1.0 + 1e-12) + 1e-300;
            let mut sum = 0.0;
            for (d2, k) in &offsets {
                if *d2 > r2 {
                    break;
                }
                let p: [i32; 4] = std::array::from_fn(|a| m[a] + k[a]);
                if (0..4).any(|a| p[a] < 0 || p[a] >= ext[a]) {
                    continue;
                }
                sum += masses[grid.flat_index(p.map(|v| v as usize))];
                if sum > cap {
                    return f64::INFINITY;
                }
            }
            sum
        })
        .collect()
}

/// Cells of the grid that meet the set, and the distance from every cell
/// center to the set.
pub fn set_geometry(spec: &FractalSpec, grid: &GridSpec) -> (Vec<bool>, Vec<f64>) {
    (0..grid.len())
        .map(|i| {
            let c = grid.center(i);
            let lo: [f64; 4] = std::array::from_fn(|a| c[a] - 0.5 * grid.spacing[a]);
            let hi: [f64; 4] = std::array::from_fn(|a| c[a] + 0.5 * grid.spacing[a]);
            (spec.meets_box(&lo, &hi), spec.distance(&c))
        })
        .unzip()
}

/// Mass of D^{Lambda} for every Lambda of the ladder, one replica.
pub fn isothermal_masses(
    measure: &impl CellMasses,
    in_set: &[bool],
    dist: &[f64],
    lambdas: &[f64],
) -> Vec<f64> {
    let masses = measure.masses();
    let cap = lambdas.iter().cloned().fold(0.0, f64::max);
    let ball = closed_ball_masses(measure.grid(), masses, dist, cap);
    let mut base = 0.0;
    let mut keyed: Vec<(f64, f64)> = Vec::new();
    for i in 0..masses.len() {
        if in_set[i] {
            base += masses[i];
        } else if ball[i].is_finite() {
            keyed.push((ball[i], masses[i]));
        }
    }
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    lambdas
        .iter()
        .map(|&l| base + keyed.iter().take_while(|(m, _)| *m <= l).map(|(_, w)| w).sum::<f64>())
        .collect()
}

/// A Lambda is used in the fit when the mean neighborhood mass is at least
/// this multiple of the mean mass of the cells meeting the set.
pub const FLOOR_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRow {
    pub lambda: f64,
    pub mean_mass: f64,
    pub stderr: f64,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRun {
    pub rows: Vec<EmpiricalRow>,
    pub fit: ExponentFit,
    /// Mean mass of the cells meeting the set.
    pub floor: f64,
    pub median_total: f64,
}

/// Regression of log E[m(D^{Lambda})] on log Lambda over the resolvable
/// part of the ladder; the slope estimates K.
pub fn quantum_exponent_empirical<M: CellMasses + Sync>(
    spec: &FractalSpec,
    measures: &[M],
    lambdas: &[f64],
) -> Result<EmpiricalRun> {
    spec.validate()?;
    if measures.len() < 2 {
        return Err(Error::Statistics("the empirical route needs at least 2 replicas".into()));
    }
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(domain("every Lambda must be positive"));
    }
    let grid = measures[0].grid().clone();
    let (in_set, dist) = set_geometry(spec, &grid);
    if !in_set.iter().any(|b| *b) {
        return Err(Error::Range("the set does not meet the grid".into()));
    }
    let per: Vec<Vec<f64>> = measures.iter().map(|m| isothermal_masses(m, &in_set, &dist, lambdas)).collect();
    let floors: Vec<f64> = measures
        .iter()
        .map(|m| m.masses().iter().zip(&in_set).filter(|(_, s)| **s).map(|(w, _)| w).sum())
        .collect();
    let floor = floors.iter().sum::<f64>() / floors.len() as f64;
    let mut totals: Vec<f64> = measures.iter().map(|m| m.masses().iter().sum()).collect();
    totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_total = totals[totals.len() / 2];
    let mut rows = Vec::new();
    for (j, &lambda) in lambdas.iter().enumerate() {
        let vals: Vec<f64> = per.iter().map(|v| v[j]).collect();
        let est = mean_stderr(&vals)?;
        rows.push(EmpiricalRow {
            lambda,
            mean_mass: est.mean,
            stderr: est.stderr,
            used: lambda < median_total && est.mean >= FLOOR_FACTOR * floor,
        });
    }
    let used: Vec<&EmpiricalRow> = rows.iter().filter(|r| r.used).collect();
    if used.len() < 3 {
        return Err(Error::Range(format!(
            "only {} Lambda values lie in the resolvable range (mass above {FLOOR_FACTOR} x floor {floor:.3e}, Lambda below median total {median_total:.3e})",
            used.len()
        )));
    }
    let x: Vec<f64> = used.iter().map(|r| r.lambda.ln()).collect();
    let y: Vec<f64> = used.iter().map(|r| r.mean_mass.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(EmpiricalRun {
        rows,
        fit,
        floor,
        median_total,
    })
}
