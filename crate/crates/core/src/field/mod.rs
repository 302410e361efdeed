//! Joint sampling of the mu-contracted Gaussian family on a grid across a
//! scale ladder, plus the radial Brownian process.

pub mod circulant;
pub mod container;
pub mod dense;

use crate::error::{domain, Result};
use crate::kernels::{cov_scalar_at, g_inverse, g_unchecked, PointScale};
use crate::rng::stream_rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;

pub use circulant::CirculantSampler;
pub use dense::{build_covariance, sample_dense, DenseFieldSampler, DenseFactor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub eps0: f64,
    pub depth: usize,
    pub levels: Vec<f64>,
}

impl ScaleLadder {
    pub fn new(eps0: f64, depth: usize) -> Result<Self> {
        if !(eps0 > 0.0 && eps0 < 1.0) {
            return Err(domain(format!("eps0 must lie in (0,1), got {eps0}")));
        }
        if depth == 0 {
            return Err(domain("ladder depth must be positive"));
        }
        let levels: Vec<f64> = (1..=depth).map(|n| eps0.powi(n as i32)).collect();
        if levels[depth - 1] <= 0.0 {
            return Err(domain("finest ladder level underflows"));
        }
        Ok(ScaleLadder { eps0, depth, levels })
    }

    /// epsilon_n for n = 1..=depth.
    pub fn eps(&self, n: usize) -> f64 {
        self.levels[n - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 4],
    pub spacing: [f64; 4],
    pub extent: [usize; 4],
}

impl GridSpec {
    pub fn new(origin: [f64; 4], spacing: [f64; 4], extent: [usize; 4]) -> Result<Self> {
        if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(domain("grid spacing must be positive"));
        }
        if extent.iter().any(|&n| n == 0) {
            return Err(domain("grid extents must be positive"));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(domain("grid origin must be finite"));
        }
        Ok(GridSpec { origin, spacing, extent })
    }

    /// Box [origin, origin + side]^4 split into n cells per axis.
    pub fn cube(origin: [f64; 4], side: f64, n: usize) -> Result<Self> {
        GridSpec::new(origin, [side / n as f64; 4], [n; 4])
    }

    pub fn len(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn box_volume(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    /// Row-major multi-index (last axis fastest).
    pub fn multi_index(&self, mut idx: usize) -> [usize; 4] {
        let mut out = [0; 4];
        for ax in (0..4).rev() {
            out[ax] = idx % self.extent[ax];
            idx /= self.extent[ax];
        }
        out
    }

    pub fn flat_index(&self, m: [usize; 4]) -> usize {
        ((m[0] * self.extent[1] + m[1]) * self.extent[2] + m[2]) * self.extent[3] + m[3]
    }

    pub fn center(&self, idx: usize) -> [f64; 4] {
        let m = self.multi_index(idx);
        std::array::from_fn(|ax| self.origin[ax] + (m[ax] as f64 + 0.5) * self.spacing[ax])
    }

    pub fn upper(&self) -> [f64; 4] {
        std::array::from_fn(|ax| self.origin[ax] + self.extent[ax] as f64 * self.spacing[ax])
    }

    /// Cell containing x, if any.
    pub fn locate(&self, x: &[f64; 4]) -> Option<usize> {
        let mut m = [0; 4];
        for ax in 0..4 {
            let u = (x[ax] - self.origin[ax]) / self.spacing[ax];
            if !(u >= 0.0 && u < self.extent[ax] as f64) {
                return None;
            }
            m[ax] = u.floor() as usize;
        }
        Some(self.flat_index(m))
    }

    pub fn diameter(&self) -> f64 {
        (0..4)
            .map(|ax| (self.extent[ax] as f64 * self.spacing[ax]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Dense,
    Circulant,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Dense => "dense",
            Backend::Circulant => "circulant",
        }
    }
}

/// Auditable record of the numerical compromises behind a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Diagonal jitter added before the Cholesky factorization (dense).
    pub jitter: f64,
    /// Torus extents used for the embedding (circulant).
    pub embedding: [usize; 4],
    /// Negative spectral mass relative to total spectral mass (circulant).
    pub negative_fraction: f64,
    /// Whether negative eigenvalues were clipped and levels rescaled.
    pub approximate: bool,
    /// Per-level variance rescale factors applied after clipping.
    pub rescale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: GridSpec,
    pub ladder: ScaleLadder,
    /// Level-major, then row-major grid order.
    pub values: Vec<f64>,
    pub seed: u64,
    pub replica: u64,
    pub backend: Backend,
    pub provenance: Provenance,
}

impl FieldSample {
    /// Values of level n (1-based).
    pub fn level(&self, n: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[(n - 1) * m..n * m]
    }

    pub fn value(&self, n: usize, point: usize) -> f64 {
        self.values[(n - 1) * self.grid.len() + point]
    }
}

/// Producer of coupled multi-level samples. Draws come in pairs: pair j is
/// generated from stream j of the master seed, and replica r is member r % 2
/// of pair r / 2.
pub trait FieldSampler: Sync {
    fn draw_pair(&self, seed: u64, pair: u64) -> Result<[FieldSample; 2]>;

    fn sample(&self, seed: u64, replica: u64) -> Result<FieldSample> {
        let [a, b] = self.draw_pair(seed, replica / 2)?;
        Ok(if replica % 2 == 0 { a } else { b })
    }
}

/// Dense when the joint system fits under `dense_cap`, circulant otherwise,
/// unless a backend is forced.
pub fn make_sampler(
    grid: &GridSpec,
    ladder: &ScaleLadder,
    backend: Option<Backend>,
    dense_cap: usize,
) -> Result<Box<dyn FieldSampler>> {
    let choice = backend.unwrap_or(if grid.len() * ladder.depth <= dense_cap {
        Backend::Dense
    } else {
        Backend::Circulant
    });
    Ok(match choice {
        Backend::Dense => Box::new(DenseFieldSampler::new(grid, ladder, dense_cap)?),
        Backend::Circulant => Box::new(CirculantSampler::new(grid, ladder, Default::default())?),
    })
}

/// Map every replica through `f` in parallel; results are in replica order.
pub fn map_replicas<T, F>(sampler: &dyn FieldSampler, seed: u64, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&FieldSample) -> Result<T> + Sync,
{
    let pairs = count.div_ceil(2);
    let nested: Vec<Result<Vec<T>>> = (0..pairs as u64)
        .into_par_iter()
        .map(|j| {
            let [a, b] = sampler.draw_pair(seed, j)?;
            let mut out = vec![f(&a)?];
            if 2 * j as usize + 1 < count {
                out.push(f(&b)?);
            }
            Ok(out)
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for r in nested {
        out.extend(r?);
    }
    Ok(out)
}

/// Covariance lookups keyed by level pair and squared distance; many lattice
/// displacements share a distance.
pub(crate) struct CovCache {
    levels: Vec<f64>,
    map: Mutex<HashMap<(usize, usize, u64), f64>>,
}

impl CovCache {
    pub fn new(levels: &[f64]) -> Self {
        CovCache {
            levels: levels.to_vec(),
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, a: usize, b: usize, d2: f64) -> Result<f64> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let key = (a, b, d2.to_bits());
        if let Some(v) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = cov_scalar_at(d2.sqrt(), self.levels[a], self.levels[b])?;
        self.map.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Radial process

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialPath {
    pub x: [f64; 4],
    pub r_ref: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// r(t) = G^{-1}(t + G(R)).
    pub radii: Vec<f64>,
}

/// Standard Brownian path at the given times; X_0 = 0.
pub fn sample_radial(x: [f64; 4], r_ref: f64, times: &[f64], seed: u64) -> Result<RadialPath> {
    PointScale::new(x, r_ref)?;
    let mut prev = 0.0;
    for &t in times {
        if !(t.is_finite() && t >= prev) {
            return Err(domain("radial times must be finite, nonnegative and increasing"));
        }
        prev = t;
    }
    let g_ref = g_unchecked(r_ref);
    let mut rng = stream_rng(seed, 0);
    let mut values = Vec::with_capacity(times.len());
    let mut radii = Vec::with_capacity(times.len());
    let (mut t_prev, mut x_prev) = (0.0, 0.0);
    for &t in times {
        let z: f64 = StandardNormal.sample(&mut rng);
        let v = x_prev + (t - t_prev).sqrt() * z;
        values.push(v);
        radii.push(if t == 0.0 { r_ref } else { g_inverse(t + g_ref)? });
        t_prev = t;
        x_prev = v;
    }
    Ok(RadialPath {
        x,
        r_ref,
        times: times.to_vec(),
        values,
        radii,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_roundtrip() {
        let g = GridSpec::new([0.0; 4], [0.5, 0.25, 1.0, 2.0], [3, 4, 2, 5]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.flat_index(g.multi_index(i)), i);
            assert_eq!(g.locate(&g.center(i)), Some(i));
        }
        assert_eq!(g.multi_index(1), [0, 0, 0, 1]);
        assert!((g.box_volume() - 1.5 * 1.0 * 2.0 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn ladder_levels() {
        let l = ScaleLadder::new(0.5, 5).unwrap();
        assert_eq!(l.eps(1), 0.5);
        assert_eq!(l.eps(5), 1.0 / 32.0);
        assert!(ScaleLadder::new(1.0, 3).is_err());
    }

    #[test]
    fn radial_starts_at_zero() {
        let p = sample_radial([0.0; 4], 1.0, &[0.0, 0.5, 1.0], 3).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p.radii[0], 1.0);
        assert!(p.radii[2] < p.radii[1]);
    }
}
