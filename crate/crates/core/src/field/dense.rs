//! Exact sampling by Cholesky factorization of the full Gram matrix.

use super::{Backend, CovCache, FieldSample, FieldSampler, GridSpec, Provenance, ScaleLadder};
use crate::error::{Error, Result};
use crate::kernels::{cov_scalar, PointScale};
use crate::rng::stream_rng;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

pub const DEFAULT_DENSE_CAP: usize = 4096;
const JITTER_START: f64 = 1e-11;
const JITTER_STEPS: usize = 3;

pub fn build_covariance(points: &[PointScale], cap: usize) -> Result<DMatrix<f64>> {
    let n = points.len();
    if n > cap {
        return Err(Error::Capacity { requested: n, cap });
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = cov_scalar(&points[i], &points[j])?;
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    Ok(m)
}

/// Lower Cholesky factor (row-major) with the jitter that was needed.
///
/// Pivots that vanish to rounding level are accepted as exact zeros, so
/// rank-deficient but PSD matrices factor without jitter.
#[derive(Debug, Clone)]
pub struct DenseFactor {
    n: usize,
    l: Vec<f64>,
    pub jitter: f64,
}

const ZERO_PIVOT: f64 = 1e-13;

fn cholesky_semidefinite(a: &DMatrix<f64>, jitter: f64) -> Option<Vec<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
            let mut v = a[(i, j)] - dot;
            if i == j {
                v += jitter;
                if v > ZERO_PIVOT * scale {
                    l[i * n + i] = v.sqrt();
                } else if v >= -ZERO_PIVOT * scale {
                    l[i * n + i] = 0.0;
                } else {
                    return None;
                }
            } else {
                let d = l[j * n + j];
                if d > 0.0 {
                    l[i * n + j] = v / d;
                } else if v.abs() > 1e3 * ZERO_PIVOT * scale {
                    // zero pivot with a nonzero coupling: not PSD
                    return None;
                }
            }
        }
    }
    Some(l)
}

impl DenseFactor {
    /// Factor with escalating diagonal jitter: none, then
    /// 1e-11, 1e-10, 1e-9, 1e-8 times trace/size.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        if n != cov.ncols() {
            return Err(Error::Domain("covariance must be square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (cov[(i, j)], cov[(j, i)]);
                if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(1e-300) {
                    return Err(Error::Domain("covariance must be symmetric".into()));
                }
            }
        }
        if let Some(l) = cholesky_semidefinite(cov, 0.0) {
            return Ok(DenseFactor { n, l, jitter: 0.0 });
        }
        let scale = cov.trace() / n.max(1) as f64;
        let mut jitter = JITTER_START * scale;
        for _ in 0..=JITTER_STEPS {
            if let Some(l) = cholesky_semidefinite(cov, jitter) {
                return Ok(DenseFactor { n, l, jitter });
            }
            jitter *= 10.0;
        }
        let min_eigenvalue = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        Err(Error::IllConditioned {
            min_eigenvalue,
            jitter: jitter / 10.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let n = self.n;
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| self.l[i * n..i * n + i + 1].iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// One draw from N(0, cov) using stream 0 of `seed`.
pub fn sample_dense(cov: &DMatrix<f64>, seed: u64) -> Result<(Vec<f64>, f64)> {
    let f = DenseFactor::new(cov)?;
    let mut rng = stream_rng(seed, 0);
    Ok((f.draw(&mut rng), f.jitter))
}

/// Dense ground-truth sampler over all (level, grid point) pairs.
pub struct DenseFieldSampler {
    grid: GridSpec,
    ladder: ScaleLadder,
    factor: DenseFactor,
}

impl DenseFieldSampler {
    pub fn new(grid: &GridSpec, ladder: &ScaleLadder, cap: usize) -> Result<Self> {
        let m = grid.len();
        let n = m * ladder.depth;
        if n > cap {
            return Err(Error::Capacity { requested: n, cap });
        }
        let cache = CovCache::new(&ladder.levels);
        let centers: Vec<[f64; 4]> = (0..m).map(|i| grid.center(i)).collect();
        let mut cov = DMatrix::zeros(n, n);
        for a in 0..ladder.depth {
            for b in 0..=a {
                for i in 0..m {
                    for j in 0..m {
                        let d2: f64 = (0..4).map(|k| (centers[i][k] - centers[j][k]).powi(2)).sum();
                        let v = cache.get(a, b, d2)?;
                        cov[(a * m + i, b * m + j)] = v;
                        cov[(b * m + j, a * m + i)] = v;
                    }
                }
            }
        }
        Ok(DenseFieldSampler {
            grid: grid.clone(),
            ladder: ladder.clone(),
            factor: DenseFactor::new(&cov)?,
        })
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }
}

impl FieldSampler for DenseFieldSampler {
    fn draw_pair(&self, seed: u64, pair: u64) -> Result<[FieldSample; 2]> {
        let mut rng = stream_rng(seed, pair);
        let make = |values: Vec<f64>, replica: u64| FieldSample {
            grid: self.grid.clone(),
            ladder: self.ladder.clone(),
            values,
            seed,
            replica,
            backend: Backend::Dense,
            provenance: Provenance {
                jitter: self.factor.jitter,
                embedding: [0; 4],
                negative_fraction: 0.0,
                approximate: false,
                rescale: vec![1.0; self.ladder.depth],
            },
        };
        let a = self.factor.draw(&mut rng);
        let b = self.factor.draw(&mut rng);
        Ok([make(a, 2 * pair), make(b, 2 * pair + 1)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_matrix() {
        let p = PointScale::new([0.0; 4], 0.5).unwrap();
        let m = build_covariance(&[p], 4).unwrap();
        assert!((m[(0, 0)] - crate::kernels::g_variance(0.5).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn capacity_enforced() {
        let p = PointScale::new([0.0; 4], 0.5).unwrap();
        assert!(matches!(build_covariance(&[p; 5], 4), Err(Error::Capacity { .. })));
    }

    #[test]
    fn rank_one_draws_are_equal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = DenseFactor::new(&m).unwrap();
        assert_eq!(f.jitter, 0.0);
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let v = f.draw(&mut rng);
            assert!((v[0] - v[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn indefinite_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(DenseFactor::new(&m), Err(Error::IllConditioned { .. })));
    }
}
