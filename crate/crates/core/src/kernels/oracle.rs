//! Oscillatory integral forms of the spherical-average covariances.
//!
//! The four components are integrated together: adaptive Gauss-Kronrod on
//! [0, T] with T = max(30, 50 / min(eps1, eps2, d)), plus the analytic
//! Hankel tail beyond T.

use super::tail::bessel_product_tail;
use super::{mu_unchecked, PointScale, Regime, FOUR_PI2};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, AdaptiveOptions};
use crate::special::j12;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SphereForm {
    SigmaSigma,
    SigmaDSigma,
    DSigmaSigma,
    DSigmaDSigma,
}

impl SphereForm {
    fn index(self) -> usize {
        match self {
            SphereForm::SigmaSigma => 0,
            SphereForm::SigmaDSigma => 1,
            SphereForm::DSigmaSigma => 2,
            SphereForm::DSigmaDSigma => 3,
        }
    }
}

const INTERNAL_TOL: f64 = 1e-11;
const MAX_PANELS: usize = 400_000;

/// All four covariances <sigma sigma>, <sigma dsigma>, <dsigma sigma>,
/// <dsigma dsigma>, with error weights chosen by the caller.
pub(crate) fn components(d: f64, e1: f64, e2: f64, weights: [f64; 4], tol: f64) -> Result<[f64; 4]> {
    let concentric = d == 0.0;
    let smallest = if concentric { e1.min(e2) } else { e1.min(e2).min(d) };
    let t_switch = (50.0 / smallest).max(30.0);
    let omega_max = e1 + e2 + d;
    let n_panels = ((t_switch * omega_max / (2.0 * PI)).ceil() as usize).max(4);
    let breaks: Vec<f64> = (0..=n_panels).map(|i| t_switch * i as f64 / n_panels as f64).collect();

    let (pref, sign) = if concentric {
        (1.0 / (2.0 * PI * PI * e1 * e2), [1.0, -1.0, -1.0, 1.0])
    } else {
        (1.0 / (PI * PI * e1 * e2 * d), [1.0, -1.0, -1.0, 1.0])
    };
    let scaled: [f64; 4] = std::array::from_fn(|i| weights[i] * pref);

    let body = |tau: f64| -> [f64; 4] {
        let (a1, a2) = j12(e1 * tau);
        let (b1, b2) = j12(e2 * tau);
        let w = 1.0 / ((1.0 + tau * tau) * (1.0 + tau * tau));
        if concentric {
            let t1 = tau * w;
            let t2 = tau * t1;
            let t3 = tau * t2;
            [t1 * a1 * b1, -t2 * a1 * b2, -t2 * a2 * b1, t3 * a2 * b2]
        } else {
            let (c1, _) = j12(d * tau);
            let t0 = w * c1;
            let t1 = tau * t0;
            let t2 = tau * t1;
            [t0 * a1 * b1, -t1 * a1 * b2, -t1 * a2 * b1, t2 * a2 * b2]
        }
    };
    let (head, _) = integrate_adaptive(
        body,
        &breaks,
        scaled,
        AdaptiveOptions {
            abs_tol: tol,
            max_panels: MAX_PANELS,
        },
    )
    .map_err(|e| match e {
        Error::Quadrature { estimate, tolerance, .. } => Error::Quadrature {
            estimate,
            tolerance,
            context: format!("spherical-average integral at d={d}, eps=({e1}, {e2})"),
        },
        other => other,
    })?;

    let forms: [(i32, u32, u32); 4] = [(1, 1, 1), (2, 1, 2), (2, 2, 1), (3, 2, 2)];
    let mut out = [0.0; 4];
    for (i, &(q, n1, n2)) in forms.iter().enumerate() {
        if weights[i] == 0.0 {
            continue;
        }
        let tail = if concentric {
            bessel_product_tail(q, &[(n1, e1), (n2, e2)], t_switch)
        } else {
            bessel_product_tail(q - 1, &[(n1, e1), (n2, e2), (1, d)], t_switch)
        };
        out[i] = pref * (head[i] + sign[i] * tail);
    }
    Ok(out)
}

/// One integral form of the spherical averages at a and b.
pub fn cov_integral_oracle(a: &PointScale, b: &PointScale, which: SphereForm) -> Result<f64> {
    let d = a.distance(b);
    let mut w = [0.0; 4];
    w[which.index()] = 1.0;
    Ok(components(d, a.eps, b.eps, w, INTERNAL_TOL)?[which.index()])
}

/// The mu-contracted covariance f1 f1 <ss> + f1 f2 <s ds> + f2 f1 <ds s> + f2 f2 <ds ds>,
/// valid in every regime.
pub fn mu_contracted_oracle(a: &PointScale, b: &PointScale) -> Result<f64> {
    contracted_at(a.distance(b), a.eps, b.eps)
}

pub(crate) fn contracted_at(d: f64, e1: f64, e2: f64) -> Result<f64> {
    let (f1a, f2a) = mu_unchecked(e1);
    let (f1b, f2b) = mu_unchecked(e2);
    let w = [f1a * f1b, f1a * f2b, f2a * f1b, f2a * f2b];
    let c = components(d, e1, e2, w, INTERNAL_TOL)?;
    Ok(w.iter().zip(c.iter()).map(|(w, c)| w * c).sum())
}

/// Overlap-regime covariance.
pub fn cov_overlap_quadrature(a: &PointScale, b: &PointScale) -> Result<f64> {
    let d = a.distance(b);
    if super::regime_of(d, a.eps, b.eps) != Regime::Overlap {
        return Err(Error::Domain("cov_overlap_quadrature called outside the overlap regime".into()));
    }
    overlap_at(d, a.eps, b.eps)
}

pub(crate) fn overlap_at(d: f64, e1: f64, e2: f64) -> Result<f64> {
    contracted_at(d, e1, e2)
}

/// Closed-form check value for the concentric sigma-sigma form at eps = r.
pub fn sigma_sigma_concentric_reference(r: f64) -> f64 {
    let a = super::mat_a(r);
    let b = super::mat_b(r);
    -(a[0][0] * b[0][0] + a[0][1] * b[0][1]) / FOUR_PI2
}
