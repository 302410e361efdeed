mod common;

use common::{i_series, k0_series, simpson};
use gff4d::kernels::oracle::sigma_sigma_concentric_reference;
use gff4d::kernels::*;
use gff4d::special::{bessel_j, BesselOrder};
use gff4d::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

const G_AT_ONE: f64 = 0.035_255_031_98;

/// (f1, f2) straight from the 2x2 inverse, with I_n from the power series.
fn mu_ref(eps: f64) -> (f64, f64) {
    let (i0, i1, i2) = (i_series(0, eps), i_series(1, eps), i_series(2, eps));
    let d = i1 * i1 - i0 * i2;
    ((eps * i1 - 2.0 * i2) / d, (2.0 * i1 - eps * i0) / d)
}

/// Fourier-side mu covariance by plain Simpson on [0, T] plus the leading
/// mean of the tail. Uses only J1 and J2, which are checked on their own.
fn fourier_cov(d: f64, e1: f64, e2: f64) -> f64 {
    let (f1a, f2a) = mu_ref(e1);
    let (f1b, f2b) = mu_ref(e2);
    let j = |n: BesselOrder, x: f64| bessel_j(n, x).unwrap();
    let m = |f1: f64, f2: f64, e: f64, t: f64| f1 * j(BesselOrder::One, e * t) - f2 * t * j(BesselOrder::Two, e * t);
    let w = |t: f64| 1.0 / (1.0 + t * t).powi(2);
    let big_t = 20_000.0;
    let n = 2_000_000;
    if d == 0.0 {
        let body = simpson(|t| t * w(t) * m(f1a, f2a, e1, t) * m(f1b, f2b, e2, t), 0.0, big_t, n);
        // cos^2 of the two J2 envelopes averages to 1/2 only when the radii agree
        let tail = if e1 == e2 { f2a * f2b / (PI * e1 * big_t) } else { 0.0 };
        (body + tail) / (2.0 * PI * PI * e1 * e2)
    } else {
        let body = simpson(
            |t| w(t) * j(BesselOrder::One, d * t) * m(f1a, f2a, e1, t) * m(f1b, f2b, e2, t),
            0.0,
            big_t,
            n,
        );
        body / (PI * PI * e1 * e2 * d)
    }
}

fn ps(x: [f64; 4], eps: f64) -> PointScale {
    PointScale::new(x, eps).unwrap()
}

#[test]
fn g_at_one_against_fourier_oracle() {
    let oracle = fourier_cov(0.0, 1.0, 1.0);
    assert!((oracle - G_AT_ONE).abs() < 1e-8, "oracle {oracle}");
    let g = g_variance(1.0).unwrap();
    assert!((g - G_AT_ONE).abs() < 1e-10, "{g}");
}

#[test]
fn concentric_unequal_radii_see_the_outer_variance() {
    let oracle = fourier_cov(0.0, 0.5, 1.0);
    let closed = cov_scalar(&ps([0.0; 4], 0.5), &ps([0.0; 4], 1.0)).unwrap();
    assert!((closed - g_variance(1.0).unwrap()).abs() < 1e-15);
    assert!((oracle - closed).abs() < 1e-7, "{oracle} vs {closed}");
}

#[test]
fn disjoint_pairs_reduce_to_k0() {
    for (d, e1, e2) in [(1.0, 0.3, 0.4), (2.5, 1.0, 0.2), (0.7, 0.1, 0.1)] {
        let want = k0_series(d) / (2.0 * PI * PI);
        let closed = cov_scalar_at(d, e1, e2).unwrap();
        assert!((closed - want).abs() < 1e-13, "closed {d}");
        let oracle = fourier_cov(d, e1, e2);
        assert!((oracle - want).abs() < 1e-9, "oracle {d}: {oracle} vs {want}");
    }
}

#[test]
fn inclusion_against_fourier_oracle() {
    let a = ps([0.0; 4], 1.0);
    let b = ps([0.2, 0.1, 0.0, 0.0], 0.4);
    assert_eq!(classify_regime(&a, &b), Regime::Inclusion);
    let closed = cov_scalar(&a, &b).unwrap();
    let oracle = fourier_cov(a.distance(&b), 1.0, 0.4);
    assert!((closed - oracle).abs() < 1e-9, "{closed} vs {oracle}");
    assert!((closed - mu_contracted_oracle(&a, &b).unwrap()).abs() < 1e-10);
}

#[test]
fn mu_coefficients_match_inverse() {
    for eps in [1e-4, 0.1, 0.5, 1.0, 3.0, 10.0] {
        let (f1, f2) = mu_coefficients(eps).unwrap();
        let (g1, g2) = mu_ref(eps);
        assert!((f1 / g1 - 1.0).abs() < 1e-10, "f1 at {eps}");
        assert!((f2 / g2 - 1.0).abs() < 1e-8, "f2 at {eps}");
    }
    let (f1, f2) = mu_coefficients(1.0).unwrap();
    assert!((f1 - 1.990_410_18).abs() < 1e-7);
    assert!((f2 + 0.920_077_91).abs() < 1e-7);
    assert!(matches!(mu_coefficients(0.0), Err(Error::Domain(_))));
}

#[test]
fn regime_classification_examples() {
    let o = ps([0.0; 4], 0.3);
    assert_eq!(classify_regime(&o, &ps([0.0; 4], 0.1)), Regime::Concentric);
    assert_eq!(classify_regime(&o, &ps([1.0, 0.0, 0.0, 0.0], 0.3)), Regime::Disjoint);
    assert_eq!(classify_regime(&o, &ps([0.1, 0.0, 0.0, 0.0], 0.1)), Regime::Inclusion);
    assert_eq!(classify_regime(&o, &ps([0.4, 0.0, 0.0, 0.0], 0.3)), Regime::Overlap);
    // tangency is overlap
    assert_eq!(regime_of(0.6, 0.3, 0.3), Regime::Overlap);
    assert_eq!(regime_of(0.2, 0.3, 0.1), Regime::Overlap);
}

#[test]
fn vector_covariance_is_transposed_under_swap() {
    for (x, e1, e2) in [(0.0, 0.8, 0.3), (0.15, 0.2, 0.9), (1.2, 0.4, 0.5)] {
        let a = ps([0.0; 4], e1);
        let b = ps([x, 0.0, 0.0, 0.0], e2);
        let m = cov_vector(&a, &b).unwrap();
        let t = cov_vector(&b, &a).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[i][j] - t[j][i]).abs() < 1e-13 * (1.0 + m[i][j].abs()));
            }
        }
        assert!((contract(&m, e1, e2) - cov_scalar(&a, &b).unwrap()).abs() < 1e-12);
    }
    let a = ps([0.0; 4], 0.5);
    let b = ps([0.6, 0.0, 0.0, 0.0], 0.5);
    assert!(matches!(cov_vector(&a, &b), Err(Error::UnsupportedRegime(_))));
}

#[test]
fn sigma_sigma_concentric_identity() {
    for r in [0.2, 1.0, 2.5] {
        let a = ps([0.0; 4], r);
        let v = cov_integral_oracle(&a, &a, SphereForm::SigmaSigma).unwrap();
        let want = sigma_sigma_concentric_reference(r);
        assert!((v - want).abs() < 1e-9 * want.abs().max(1e-3), "{r}: {v} vs {want}");
    }
}

#[test]
fn overlap_is_continuous_across_regime_boundaries() {
    let eta = 1e-7;
    // disjoint side of the tangency d = e1 + e2
    let (e1, e2) = (0.3, 0.2);
    let out = cov_scalar_at(0.5 + eta, e1, e2).unwrap();
    let inn = cov_scalar_at(0.5 - eta, e1, e2).unwrap();
    assert!((out - inn).abs() < 1e-6, "{out} {inn}");
    // inclusion side of d = e1 - e2
    let a = cov_scalar_at(0.1 - eta, e1, e2).unwrap();
    let b = cov_scalar_at(0.1 + eta, e1, e2).unwrap();
    assert!((a - b).abs() < 1e-6, "{a} {b}");
}

#[test]
fn overlap_quadrature_rejects_other_regimes() {
    let a = ps([0.0; 4], 0.2);
    let b = ps([1.0, 0.0, 0.0, 0.0], 0.2);
    assert!(matches!(cov_overlap_quadrature(&a, &b), Err(Error::Domain(_))));
    let c = ps([0.3, 0.0, 0.0, 0.0], 0.2);
    let v = cov_overlap_quadrature(&a, &c).unwrap();
    assert!((v - cov_scalar(&a, &c).unwrap()).abs() < 1e-14);
}

#[test]
fn parameter_validation() {
    assert!(KernelParams::new(PI, 0.5, 1.0).is_ok());
    assert!(matches!(KernelParams::new(2.0 * PI, 0.5, 1.0), Err(Error::Domain(_))));
    assert!(matches!(KernelParams::new(1.0, 1.0, 1.0), Err(Error::Domain(_))));
    assert!(matches!(PointScale::new([0.0; 4], 0.0), Err(Error::Domain(_))));
    assert!(matches!(PointScale::new([f64::NAN, 0.0, 0.0, 0.0], 0.1), Err(Error::Domain(_))));
}

fn point() -> impl Strategy<Value = PointScale> {
    (prop::array::uniform4(-1.0f64..1.0), 0.05f64..0.6).prop_map(|(x, e)| ps(x, e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symmetric(a in point(), b in point()) {
        let ab = cov_scalar(&a, &b).unwrap();
        let ba = cov_scalar(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
    }

    #[test]
    fn rigid_motion_invariant(a in point(), b in point(), shift in prop::array::uniform4(-2.0f64..2.0), perm in Just([2usize, 0, 3, 1])) {
        let mv = |p: &PointScale| {
            let mut x = [0.0; 4];
            for i in 0..4 {
                x[i] = -p.x[perm[i]] + shift[i];
            }
            ps(x, p.eps)
        };
        let v = cov_scalar(&a, &b).unwrap();
        let w = cov_scalar(&mv(&a), &mv(&b)).unwrap();
        prop_assert!((v - w).abs() <= 1e-9 * (1.0 + v.abs()));
    }

    #[test]
    fn gram_matrix_is_psd(pts in prop::collection::vec(point(), 5)) {
        let cov = gff4d::field::build_covariance(&pts, 64).unwrap();
        let eig = nalgebra::SymmetricEigen::new(cov.clone());
        let top = eig.eigenvalues.max();
        prop_assert!(eig.eigenvalues.min() >= -1e-10 * top, "{:?}", eig.eigenvalues);
    }

    #[test]
    fn g_is_decreasing(r in 1e-6f64..20.0, f in 1.01f64..3.0) {
        prop_assert!(g_variance(r * f).unwrap() < g_variance(r).unwrap());
    }
}
