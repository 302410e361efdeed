//! Multi-level circulant embedding on a 4-D torus.
//!
//! Each cross-level covariance c_ab(|x - y|) is wrapped onto the torus by the
//! minimum-image convention and diagonalized by FFT. At every spatial
//! frequency the depth x depth spectral matrix is factored by a symmetric
//! square root, and a draw is synthesized by one inverse FFT per level. The
//! real and imaginary parts give two independent replicas.
//!
//! When the embedding is not nonnegative definite (negative spectral mass
//! above `clip_tol`) the torus is enlarged while it fits under `torus_cap`.
//! If that is not enough the negative eigenvalues are clipped and every level
//! is rescaled to its exact marginal variance, and the sample is flagged
//! approximate in its provenance.

use super::{Backend, FieldSample, FieldSampler, GridSpec, Provenance, ScaleLadder};
use crate::error::{Error, Result};
use crate::kernels::{cov_scalar_at, g_unchecked};
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy)]
pub struct CirculantOptions {
    /// Largest torus (total points) an attempt may use.
    pub torus_cap: usize,
    /// Negative spectral fraction accepted as rounding and clipped silently.
    pub clip_tol: f64,
    /// Enlargement retries after the minimal embedding.
    pub max_retries: usize,
    /// Largest negative fraction tolerated by the approximate fallback.
    pub approx_cap: f64,
}

impl Default for CirculantOptions {
    fn default() -> Self {
        CirculantOptions {
            torus_cap: 1 << 21,
            clip_tol: 1e-6,
            max_retries: 2,
            approx_cap: 0.05,
        }
    }
}

pub struct CirculantSampler {
    grid: GridSpec,
    ladder: ScaleLadder,
    torus: [usize; 4],
    /// Packed symmetric square roots of the spectral matrices, one per frequency.
    factors: Vec<f64>,
    rescale: Vec<f64>,
    negative_fraction: f64,
    approximate: bool,
    cell_to_torus: Vec<usize>,
    plans: [Option<Arc<dyn Fft<f64>>>; 4],
}

fn packed_len(l: usize) -> usize {
    l * (l + 1) / 2
}

fn packed_index(a: usize, b: usize) -> usize {
    let (a, b) = if a >= b { (a, b) } else { (b, a) };
    a * (a + 1) / 2 + b
}

fn torus_index(dims: &[usize; 4], m: [usize; 4]) -> usize {
    ((m[0] * dims[1] + m[1]) * dims[2] + m[2]) * dims[3] + m[3]
}

struct Spectrum {
    torus: [usize; 4],
    /// Eigen-decomposed spectral matrices: per frequency, L eigenvalues then L*L eigenvectors.
    eig: Vec<f64>,
    negative_fraction: f64,
}

impl CirculantSampler {
    pub fn new(grid: &GridSpec, ladder: &ScaleLadder, opts: CirculantOptions) -> Result<Self> {
        let base: [usize; 4] = std::array::from_fn(|ax| {
            let n = grid.extent[ax];
            if n == 1 {
                1
            } else {
                (2 * (n - 1)).next_power_of_two()
            }
        });
        let mut best: Option<Spectrum> = None;
        for attempt in 0..=opts.max_retries {
            let torus: [usize; 4] = std::array::from_fn(|ax| if base[ax] == 1 { 1 } else { base[ax] << attempt });
            if torus.iter().product::<usize>() > opts.torus_cap {
                break;
            }
            let spec = spectrum(grid, ladder, torus)?;
            let done = spec.negative_fraction <= opts.clip_tol;
            best = Some(spec);
            if done {
                break;
            }
        }
        let spec = best.ok_or(Error::Capacity {
            requested: base.iter().product(),
            cap: opts.torus_cap,
        })?;
        let approximate = spec.negative_fraction > opts.clip_tol;
        if approximate && spec.negative_fraction > opts.approx_cap {
            return Err(Error::Embedding {
                negative_fraction: spec.negative_fraction,
            });
        }
        Ok(Self::from_spectrum(grid, ladder, spec, approximate))
    }

    fn from_spectrum(grid: &GridSpec, ladder: &ScaleLadder, spec: Spectrum, approximate: bool) -> Self {
        let l = ladder.depth;
        let torus = spec.torus;
        let n: usize = torus.iter().product();
        let stride = l + l * l;
        let mut factors = vec![0.0; n * packed_len(l)];
        let mut diag = vec![0.0; l];
        for k in 0..n {
            let e = &spec.eig[k * stride..(k + 1) * stride];
            let (vals, vecs) = e.split_at(l);
            let out = &mut factors[k * packed_len(l)..(k + 1) * packed_len(l)];
            for a in 0..l {
                for b in 0..=a {
                    let mut s = 0.0;
                    for j in 0..l {
                        if vals[j] > 0.0 {
                            s += vecs[a * l + j] * vecs[b * l + j] * vals[j].sqrt();
                        }
                    }
                    out[packed_index(a, b)] = s;
                }
                for j in 0..l {
                    if vals[j] > 0.0 {
                        diag[a] += vecs[a * l + j] * vecs[a * l + j] * vals[j];
                    }
                }
            }
        }
        let rescale: Vec<f64> = if approximate {
            (0..l).map(|a| (g_unchecked(ladder.levels[a]) * n as f64 / diag[a]).sqrt()).collect()
        } else {
            vec![1.0; l]
        };
        let cell_to_torus = (0..grid.len()).map(|i| torus_index(&torus, grid.multi_index(i))).collect();
        let mut planner = FftPlanner::new();
        let plans = std::array::from_fn(|ax| if torus[ax] > 1 { Some(planner.plan_fft_inverse(torus[ax])) } else { None });
        CirculantSampler {
            grid: grid.clone(),
            ladder: ladder.clone(),
            torus,
            factors,
            rescale,
            negative_fraction: spec.negative_fraction,
            approximate,
            cell_to_torus,
            plans,
        }
    }

    pub fn torus(&self) -> [usize; 4] {
        self.torus
    }

    pub fn negative_fraction(&self) -> f64 {
        self.negative_fraction
    }

    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    pub fn rescale(&self) -> &[f64] {
        &self.rescale
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            jitter: 0.0,
            embedding: self.torus,
            negative_fraction: self.negative_fraction,
            approximate: self.approximate,
            rescale: self.rescale.clone(),
        }
    }
}

impl FieldSampler for CirculantSampler {
    fn draw_pair(&self, seed: u64, pair: u64) -> Result<[FieldSample; 2]> {
        let l = self.ladder.depth;
        let n: usize = self.torus.iter().product();
        let mut rng = stream_rng(seed, pair);
        let mut y = vec![Complex64::new(0.0, 0.0); l * n];
        let mut z = vec![Complex64::new(0.0, 0.0); l];
        let pl = packed_len(l);
        for k in 0..n {
            for zb in z.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *zb = Complex64::new(re, im);
            }
            let f = &self.factors[k * pl..(k + 1) * pl];
            for a in 0..l {
                let mut s = Complex64::new(0.0, 0.0);
                for (b, zb) in z.iter().enumerate() {
                    s += *zb * f[packed_index(a, b)];
                }
                y[a * n + k] = s;
            }
        }
        let norm = 1.0 / (n as f64).sqrt();
        let cells = self.grid.len();
        let mut re = vec![0.0; l * cells];
        let mut im = vec![0.0; l * cells];
        for a in 0..l {
            let block = &mut y[a * n..(a + 1) * n];
            fft4(block, &self.torus, &self.plans);
            let s = norm * self.rescale[a];
            for (p, &t) in self.cell_to_torus.iter().enumerate() {
                re[a * cells + p] = block[t].re * s;
                im[a * cells + p] = block[t].im * s;
            }
        }
        let make = |values: Vec<f64>, replica: u64| FieldSample {
            grid: self.grid.clone(),
            ladder: self.ladder.clone(),
            values,
            seed,
            replica,
            backend: Backend::Circulant,
            provenance: self.provenance(),
        };
        Ok([make(re, 2 * pair), make(im, 2 * pair + 1)])
    }
}

/// In-place 4-D transform along every axis with a plan.
fn fft4(data: &mut [Complex64], dims: &[usize; 4], plans: &[Option<Arc<dyn Fft<f64>>>; 4]) {
    if let Some(p) = &plans[3] {
        p.process(data);
    }
    const BATCH: usize = 64;
    let mut buf = Vec::new();
    for ax in 0..3 {
        let Some(p) = &plans[ax] else { continue };
        let m = dims[ax];
        let stride: usize = dims[ax + 1..].iter().product();
        let outer: usize = dims[..ax].iter().product();
        for o in 0..outer {
            let base = o * m * stride;
            for s0 in (0..stride).step_by(BATCH) {
                let w = BATCH.min(stride - s0);
                buf.resize(m * w, Complex64::new(0.0, 0.0));
                for t in 0..m {
                    let row = &data[base + t * stride + s0..base + t * stride + s0 + w];
                    for (s, v) in row.iter().enumerate() {
                        buf[s * m + t] = *v;
                    }
                }
                p.process(&mut buf);
                for t in 0..m {
                    let row = &mut data[base + t * stride + s0..base + t * stride + s0 + w];
                    for (s, v) in row.iter_mut().enumerate() {
                        *v = buf[s * m + t];
                    }
                }
            }
        }
    }
}

fn spectrum(grid: &GridSpec, ladder: &ScaleLadder, torus: [usize; 4]) -> Result<Spectrum> {
    let l = ladder.depth;
    let n: usize = torus.iter().product();
    // squared minimum-image distance classes
    let mut class_of = vec![0u32; n];
    let mut classes: Vec<f64> = Vec::new();
    let mut lookup: HashMap<u64, u32> = HashMap::new();
    for (j, slot) in class_of.iter_mut().enumerate() {
        let mut rem = j;
        let mut d2 = 0.0;
        for ax in (0..4).rev() {
            let m = torus[ax];
            let i = rem % m;
            rem /= m;
            let w = i.min(m - i) as f64 * grid.spacing[ax];
            d2 += w * w;
        }
        let next = classes.len() as u32;
        *slot = *lookup.entry(d2.to_bits()).or_insert_with(|| {
            classes.push(d2);
            next
        });
    }
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|a| (0..=a).map(move |b| (a, b))).collect();
    let tasks: Vec<(usize, usize)> = pairs.iter().enumerate().flat_map(|(p, _)| (0..classes.len()).map(move |c| (p, c))).collect();
    let values: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(p, c)| {
            let (a, b) = pairs[p];
            cov_scalar_at(classes[c].sqrt(), ladder.levels[a], ladder.levels[b])
        })
        .collect();
   
    let mut cov = vec![0.0; pairs.len() * classes.len()];
    for (slot, v) in cov.iter_mut().zip(values) {
        *slot = v?;
    }

    let mut planner = FftPlanner::new();
    let plans: [Option<Arc<dyn Fft<f64>>>; 4] =
        std::array::from_fn(|ax| if torus[ax] > 1 { Some(planner.plan_fft_forward(torus[ax])) } else { None });
    let stride = l + l * l;
    let mut spectra = vec![0.0; n * packed_len(l)];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let row = &cov[p * classes.len()..(p + 1) * classes.len()];
        for (slot, &c) in buf.iter_mut().zip(class_of.iter()) {
            *slot = Complex64::new(row[c as usize], 0.0);
        }
        fft4(&mut buf, &torus, &plans);
        let pi = packed_index(a, b);
        for k in 0..n {
            spectra[k * packed_len(l) + pi] = buf[k].re;
        }
    }
    drop(buf);

    let mut eig = vec![0.0; n * stride];
    let (neg, total) = eig
        .par_chunks_mut(stride)
        .zip(spectra.par_chunks(packed_len(l)))
        .map_init(
            || vec![0.0; l * l],
            |m, (out, packed)| {
            for a in 0..l {
                for b in 0..l {
                    m[a * l + b] = packed[packed_index(a, b)];
                }
            }
            let (vals, vecs) = out.split_at_mut(l);
            jacobi_eigen(m, l, vals, vecs);
            let neg: f64 = vals.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
            let total: f64 = vals.iter().map(|v| v.abs()).sum();
            (neg, total)
        },
        )
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(Spectrum {
        torus,
        eig,
        negative_fraction: if total > 0.0 { neg / total } else { 0.0 },
    })
}

/// Cyclic Jacobi eigen-decomposition of a small symmetric matrix (row-major,
/// destroyed). Eigenvectors are the columns of `vecs`.
pub(crate) fn jacobi_eigen(m: &mut [f64], n: usize, vals: &mut [f64], vecs: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            vecs[i * n + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    for _sweep in 0..30 {
        let off: f64 = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| m[i * n + j].powi(2)).sum();
        let diag: f64 = (0..n).map(|i| m[i * n + i].powi(2)).sum();
        if off <= 1e-32 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-18 * (m[p * n + p].abs() + m[q * n + q].abs()) {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (vecs[k * n + p], vecs[k * n + q]);
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for i in 0..n {
        vals[i] = m[i * n + i];
    }
}


#[cfg(test)]
mod fallback_tests {
    use super::*;

    #[test]
    fn clipping_restores_marginal_variance() {
        let grid = GridSpec::new([0.0; 4], [0.25; 4], [4, 4, 1, 1]).unwrap();
        let ladder = ScaleLadder::new(0.5, 2).unwrap();
        let opts = CirculantOptions { max_retries: 0, ..Default::default() };
        let s = CirculantSampler::new(&grid, &ladder, opts).unwrap();
        assert!(s.is_approximate());
        assert!(s.negative_fraction() > 1e-3);
        // after clipping, the torus variance at lag 0 is G(eps_a) for every level
        let n: usize = s.torus().iter().product();
        let pl = packed_len(2);
        for a in 0..2 {
            let mut var = 0.0;
            for k in 0..n {
                let f = &s.factors[k * pl..(k + 1) * pl];
                var += (0..2).map(|b| f[packed_index(a, b)].powi(2)).sum::<f64>();
            }
            var *= s.rescale()[a].powi(2) / n as f64;
            let g = g_unchecked(ladder.levels[a]);
            assert!((var / g - 1.0).abs() < 1e-12, "{var} {g}");
        }
        let strict = CirculantOptions { max_retries: 0, approx_cap: 1e-4, ..Default::default() };
        assert!(matches!(CirculantSampler::new(&grid, &ladder, strict), Err(Error::Embedding { .. })));
    }
}
