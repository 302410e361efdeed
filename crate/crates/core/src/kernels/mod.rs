//! Covariance kernels of the spherical-average family on R^4.
//!
//! Closed forms cover the concentric, inclusion and disjoint regimes; the
//! oscillatory integral forms are evaluated by [`oracle`] and serve both as a
//! cross-check and as the only route in the overlap regime.

pub mod oracle;
mod tail;

use crate::error::{domain, Error, Result};
use crate::special::{i_all, i_all_scaled, i_reduced, k1_minus_inv_over_x, k_all, k_all_scaled};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub use oracle::{cov_integral_oracle, cov_overlap_quadrature, mu_contracted_oracle, SphereForm};

pub(crate) const FOUR_PI2: f64 = 4.0 * PI * PI;
pub(crate) const TWO_PI2: f64 = 2.0 * PI * PI;

/// Below this radius G, f1, f2 use the reduced series forms.
const SMALL_R: f64 = 2.0;
const LARGE_R: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
    pub epsilon0: f64,
    pub r_ref: f64,
}

impl KernelParams {
    pub fn new(gamma: f64, epsilon0: f64, r_ref: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0 && gamma * gamma < TWO_PI2) {
            return Err(domain(format!(
                "gamma must satisfy 0 < gamma^2 < 2 pi^2, got gamma^2 = {}",
                gamma * gamma
            )));
        }
        if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
            return Err(domain(format!("epsilon0 must lie in (0,1), got {epsilon0}")));
        }
        if !(r_ref.is_finite() && r_ref > 0.0) {
            return Err(domain(format!("reference radius must be positive, got {r_ref}")));
        }
        Ok(KernelParams { gamma, epsilon0, r_ref })
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma * self.gamma
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            gamma: PI,
            epsilon0: 0.5,
            r_ref: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointScale {
    pub x: [f64; 4],
    pub eps: f64,
}

impl PointScale {
    pub fn new(x: [f64; 4], eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(domain(format!("sphere radius must be positive, got {eps}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite center coordinate"));
        }
        Ok(PointScale { x, eps })
    }

    pub fn distance(&self, other: &PointScale) -> f64 {
        distance(&self.x, &other.x)
    }
}

pub fn distance(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Concentric,
    Inclusion,
    Disjoint,
    Overlap,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Concentric => "concentric",
            Regime::Inclusion => "inclusion",
            Regime::Disjoint => "disjoint",
            Regime::Overlap => "overlap",
        }
    }
}

/// Regime of a pair from its center distance and radii. Boundary equalities
/// fall into Overlap.
pub fn regime_of(d: f64, e1: f64, e2: f64) -> Regime {
    if d == 0.0 {
        Regime::Concentric
    } else if e1 > d + e2 || e2 > d + e1 {
        Regime::Inclusion
    } else if d > e1 + e2 {
        Regime::Disjoint
    } else {
        Regime::Overlap
    }
}

pub fn classify_regime(a: &PointScale, b: &PointScale) -> Regime {
    regime_of(a.distance(b), a.eps, b.eps)
}

// ---------------------------------------------------------------------------
// G, its inverse, and the mu coefficients

/// (I1^2 - I0 I2) / r^2, free of cancellation for small r.
pub fn denom_reduced(r: f64) -> f64 {
    if r <= LARGE_R {
        let (a0, a1, a2) = (i_reduced(0, r), i_reduced(1, r), i_reduced(2, r));
        0.25 * (a1 * a1 - a0 * a2)
    } else {
        let s = i_all_scaled(r);
        (s[1] * s[1] - s[0] * s[2]) * (2.0 * r).exp() / (r * r)
    }
}

/// I1^2 - I0 I2.
pub fn denom(r: f64) -> f64 {
    denom_reduced(r) * r * r
}

pub fn g_variance(r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(domain(format!("G needs r > 0, got {r}")));
    }
    Ok(g_unchecked(r))
}

pub(crate) fn g_unchecked(r: f64) -> f64 {
    if r <= SMALL_R {
        // N / r^2 and D / r^2 with N = 2 I1 K1 + 2 I2 K0 - 1.
        let q = 0.25 * r * r;
        let (a0, a1, a2) = (i_reduced(0, r), i_reduced(1, r), i_reduced(2, r));
        // (a1 - 1) / r^2 = (1/4) sum_{k>=1} q^{k-1} / (k! (k+1)!)
        let mut term = 0.5;
        let mut s = term;
        let mut k = 1.0;
        loop {
            term *= q / ((k + 1.0) * (k + 2.0));
            s += term;
            if term <= 1e-17 * s {
                break;
            }
            k += 1.0;
        }
        let k0 = k_all(r)[0];
        // N / r^2 = (a1 - 1)/r^2 + a1 (K1 - 1/r)/r + a2 K0 / 2
        let n_over_r2 = 0.25 * s + a1 * k1_minus_inv_over_x(r) + 0.5 * a2 * k0;
        let d_over_r2 = 0.25 * (a1 * a1 - a0 * a2);
        -n_over_r2 / d_over_r2 / FOUR_PI2
    } else {
        let i = i_all_scaled(r);
        let k = k_all_scaled(r);
        let num = 2.0 * (i[1] * k[1] + i[2] * k[0]) - 1.0;
        let den = i[1] * i[1] - i[0] * i[2];
        -num * (-2.0 * r).exp() / den / FOUR_PI2
    }
}

/// Radius r with G(r) = t.
pub fn g_inverse(t: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(domain(format!("G inverse needs t > 0, got {t}")));
    }
    // G is strictly decreasing; bisect in log r.
    let mut lo = -690.0f64; // G(e^lo) ~ 35
    let mut hi = 6.5f64; // G(e^hi) ~ 1e-285
    if t > g_unchecked(lo.exp()) {
        return Err(Error::Range(format!("G inverse: t = {t} beyond representable radii")));
    }
    if t < g_unchecked(hi.exp()) {
        return Err(Error::Range(format!("G inverse: t = {t} below G at the largest radius")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g_unchecked(mid.exp()) > t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// (f1, f2) such that mu_eps = f1 sigma_eps + f2 d sigma_eps.
pub fn mu_coefficients(eps: f64) -> Result<(f64, f64)> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(domain(format!("mu coefficients need eps > 0, got {eps}")));
    }
    Ok(mu_unchecked(eps))
}

pub(crate) fn mu_unchecked(eps: f64) -> (f64, f64) {
    if eps <= LARGE_R {
        let (a0, a1, a2) = (i_reduced(0, eps), i_reduced(1, eps), i_reduced(2, eps));
        let d = a1 * a1 - a0 * a2;
        (2.0 * (a1 - a2) / d, -eps * a2 / d)
    } else {
        let s = i_all_scaled(eps);
        let d = (s[1] * s[1] - s[0] * s[2]) * eps.exp();
        ((eps * s[1] - 2.0 * s[2]) / d, -eps * s[2] / d)
    }
}

// ---------------------------------------------------------------------------
// Scalar and vector covariances

pub fn cov_scalar(a: &PointScale, b: &PointScale) -> Result<f64> {
    let d = a.distance(b);
    cov_scalar_at(d, a.eps, b.eps)
}

/// Scalar covariance from the center distance and the two radii.
pub fn cov_scalar_at(d: f64, e1: f64, e2: f64) -> Result<f64> {
    match regime_of(d, e1, e2) {
        Regime::Concentric => Ok(g_unchecked(e1.max(e2))),
        Regime::Inclusion => {
            let outer = e1.max(e2);
            let id = i_all(d);
            Ok(id[0] * g_unchecked(outer) - id[2] / denom(outer) / FOUR_PI2)
        }
        Regime::Disjoint => Ok(k_all(d)[0] / TWO_PI2),
        Regime::Overlap => oracle::overlap_at(d, e1, e2),
    }
}

pub type CovMatrix2x2 = [[f64; 2]; 2];

fn mat_mul(a: &CovMatrix2x2, b: &CovMatrix2x2) -> CovMatrix2x2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn transpose(a: &CovMatrix2x2) -> CovMatrix2x2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn scale(a: &CovMatrix2x2, s: f64) -> CovMatrix2x2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

/// A(r) = [[K1', K1/r], [K1'', -K2/r]].
pub fn mat_a(r: f64) -> CovMatrix2x2 {
    let k = k_all(r);
    let k1p = k[1] / r - k[2];
    let k1pp = (1.0 + 1.0 / (r * r)) * k[1] - k1p / r;
    [[k1p, k[1] / r], [k1pp, -k[2] / r]]
}

/// B(r) = [[I1/r, I1'], [I2/r, I1'']].
pub fn mat_b(r: f64) -> CovMatrix2x2 {
    let i = i_all(r);
    [[i[1] / r, i[1] / r + i[2]], [i[2] / r, i[1] - i[2] / r]]
}

/// C(r) = [[I1/r, 0], [I2, I1/r]].
pub fn mat_c(r: f64) -> CovMatrix2x2 {
    let i = i_all(r);
    [[i[1] / r, 0.0], [i[2], i[1] / r]]
}

/// D(r) = [[-K2, K1/r], [K1/r, 0]].
pub fn mat_d(r: f64) -> CovMatrix2x2 {
    let k = k_all(r);
    [[-k[2], k[1] / r], [k[1] / r, 0.0]]
}

/// Covariance of the vectors (sigma, d sigma) at a and at b; rows index a.
pub fn cov_vector(a: &PointScale, b: &PointScale) -> Result<CovMatrix2x2> {
    let d = a.distance(b);
    let (e1, e2) = (a.eps, b.eps);
    match regime_of(d, e1, e2) {
        Regime::Concentric => {
            if e1 >= e2 {
                Ok(scale(&mat_mul(&mat_a(e1), &transpose(&mat_b(e2))), -1.0 / FOUR_PI2))
            } else {
                let m = scale(&mat_mul(&mat_a(e2), &transpose(&mat_b(e1))), -1.0 / FOUR_PI2);
                Ok(transpose(&m))
            }
        }
        Regime::Inclusion => {
            let (outer, inner) = if e1 > e2 { (e1, e2) } else { (e2, e1) };
            let m = mat_mul(&mat_mul(&mat_a(outer), &mat_c(d)), &transpose(&mat_b(inner)));
            let m = scale(&m, -1.0 / TWO_PI2);
            Ok(if e1 > e2 { m } else { transpose(&m) })
        }
        Regime::Disjoint => {
            let m = mat_mul(&mat_mul(&mat_b(e1), &mat_d(d)), &transpose(&mat_b(e2)));
            Ok(scale(&m, -1.0 / TWO_PI2))
        }
        Regime::Overlap => Err(Error::UnsupportedRegime("overlap".into())),
    }
}

/// zeta^T B^{-1}(eps) with zeta = (1, 1); equals (f1, f2).
pub fn zeta_b_inv(eps: f64) -> [f64; 2] {
    let i = i_all(eps);
    let d = denom(eps);
    let binv = [[eps * i[1] - i[2], i[1] - eps * i[0]], [-i[2], i[1]]];
    [(binv[0][0] + binv[1][0]) / d, (binv[0][1] + binv[1][1]) / d]
}

/// Contract a vector covariance to the scalar mu covariance.
pub fn contract(m: &CovMatrix2x2, e1: f64, e2: f64) -> f64 {
    let u = zeta_b_inv(e1);
    let v = zeta_b_inv(e2);
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += u[i] * m[i][j] * v[j];
        }
    }
    s
}
