mod common;

use common::{mean_se, simpson, EULER_GAMMA};
use gff4d::chaos::ChaosMeasure;
use gff4d::field::GridSpec;
use gff4d::kernels::g_variance;
use gff4d::kpz::*;
use gff4d::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp};
use std::f64::consts::PI;

fn lebesgue(n: usize) -> ChaosMeasure {
    let grid = GridSpec::cube([0.0; 4], 1.0, n).unwrap();
    ChaosMeasure {
        cell_mass: vec![grid.cell_volume(); grid.len()],
        grid,
        level: 1,
        eps: 0.5,
        gamma: 0.0,
    }
}

fn stopping(gamma: f64, lambdas: Vec<f64>, replicas: usize) -> StoppingRunParams {
    StoppingRunParams {
        gamma,
        lambdas,
        dt: 1e-4,
        replicas,
        max_time: 5.0,
        refine: 8,
    }
}

/// Roots of a K^2 + (1 - a) K - kappa = 0 by the textbook formula.
fn kpz_root(kappa: f64, gamma: f64) -> f64 {
    let a = gamma * gamma / (16.0 * PI * PI);
    if a == 0.0 {
        return kappa;
    }
    (-(1.0 - a) + ((1.0 - a).powi(2) + 4.0 * a * kappa).sqrt()) / (2.0 * a)
}

#[test]
fn kpz_inverse_reference() {
    let k = kpz_inverse(0.5, PI).unwrap();
    assert!((k - kpz_root(0.5, PI)).abs() < 1e-14);
    assert!((k - 0.51561).abs() < 1e-5, "{k}");
    assert!(matches!(kpz_quadratic(1.5, PI), Err(Error::Domain(_))));
    assert!(matches!(kpz_inverse(-0.1, PI), Err(Error::Domain(_))));
}

#[test]
fn neighborhood_volumes_match_closed_forms() {
    let l = 0.05;
    let point = FractalSpec::Point { at: [0.5; 4] };
    let v = neighborhood_volume(&point, l).unwrap();
    assert!((v / (0.5 * PI * PI * l.powi(4)) - 1.0).abs() < 1e-3, "{v}");
    let ball = FractalSpec::Ball { center: [0.0; 4], radius: 0.2 };
    let v = neighborhood_volume(&ball, l).unwrap();
    assert!((v / (0.5 * PI * PI * 0.25f64.powi(4)) - 1.0).abs() < 1e-3, "{v}");
    // square of side s in the first two coordinates: pi s^2 l^2 + (8 pi / 3) s l^3 + (pi^2 / 2) l^4
    let s = 0.5;
    let patch = FractalSpec::PlanePatch { origin: [0.0; 4], side: s };
    let v = neighborhood_volume(&patch, l).unwrap();
    let want = PI * s * s * l * l + 8.0 * PI / 3.0 * s * l.powi(3) + 0.5 * PI * PI * l.powi(4);
    assert!((v / want - 1.0).abs() < 1e-3, "{v} vs {want}");
    assert!(neighborhood_volume(&point, 0.0).is_err());
}

#[test]
fn euclidean_exponents() {
    let lambdas: Vec<f64> = (0..6).map(|k| 1e-2 * 0.5f64.powi(k)).collect();
    let point = euclidean_exponent(&FractalSpec::Point { at: [0.3; 4] }, &lambdas).unwrap();
    assert!((point.slope - 1.0).abs() < 1e-3);
    let patch = euclidean_exponent(&FractalSpec::PlanePatch { origin: [0.0; 4], side: 1.0 }, &lambdas).unwrap();
    assert!((patch.slope - 0.5).abs() < 0.01, "{}", patch.slope);
    let big: Vec<f64> = (0..6).map(|k| 1e-3 * 0.5f64.powi(k)).collect();
    let ball = euclidean_exponent(&FractalSpec::Ball { center: [0.0; 4], radius: 1.0 }, &big).unwrap();
    assert!(ball.slope.abs() < 0.01, "{}", ball.slope);
    // Cantor product between the first and the finest stage
    let ratio = 1.0 / 3.0;
    let cantor = FractalSpec::ProductCantor { origin: [0.0; 4], side: 1.0, ratio, depth: 8 };
    let mid: Vec<f64> = (0..8).map(|k| 3e-2 * 3f64.powf(-0.5 * k as f64)).collect();
    let fit = euclidean_exponent(&cantor, &mid).unwrap();
    let kappa = 1.0 - 2f64.ln() / 3f64.ln();
    assert!((cantor.kappa() - kappa).abs() < 1e-15);
    assert!((fit.slope - kappa).abs() < 0.05, "{} vs {kappa}", fit.slope);
}

#[test]
fn fractal_validation_and_distance() {
    assert!(FractalSpec::ProductCantor { origin: [0.0; 4], side: 1.0, ratio: 0.5, depth: 3 }.validate().is_err());
    assert!(FractalSpec::Ball { center: [0.0; 4], radius: -1.0 }.validate().is_err());
    let c = FractalSpec::ProductCantor { origin: [0.0; 4], side: 1.0, ratio: 1.0 / 3.0, depth: 1 };
    // the middle gap (1/3, 2/3) on every axis puts the center 1/6 from each
    assert!((c.distance(&[0.5; 4]) - (4.0f64 / 36.0).sqrt()).abs() < 1e-15);
    assert_eq!(c.distance(&[0.1, 0.9, 0.0, 1.0]), 0.0);
    assert_eq!(cantor_intervals(1.0 / 3.0, 2).len(), 4);
}

#[test]
fn stopping_times_have_the_drift_mean() {
    let p = stopping(PI, vec![0.1], 20_000);
    let (t, censored) = simulate_stopping_time(&p, 0.1, 4).unwrap();
    assert_eq!(censored, 0);
    let (m, se) = mean_se(&t);
    let want = -(0.1f64.ln()) / p.drift();
    assert!((m - want).abs() < 4.5 * se, "{m} vs {want}");
}

#[test]
fn mgf_matches_the_power_law() {
    let p = stopping(PI, vec![0.5, 0.1, 0.01], 20_000);
    let rows = mgf_check(&p, &[0.0, -0.5 * PI, -PI], 12).unwrap();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert!((r.target - r.lambda.powf(-r.s / PI)).abs() < 1e-15);
        assert!(r.zscore.abs() < 4.0, "{r:?}");
    }
    assert!((mgf_exponent(-PI, PI) - 8.0 * PI * PI).abs() < 1e-12);
    assert!(matches!(mgf_check(&p, &[0.5], 1), Err(Error::Domain(_))));
}

#[test]
fn exact_route_end_points() {
    let p = stopping(PI, vec![0.5, 0.2, 0.1, 0.05], 4000);
    let zero = quantum_exponent_exact(0.0, &p, 3).unwrap();
    assert!(zero.fit.slope.abs() < 1e-12);
    let one = quantum_exponent_exact(1.0, &p, 3).unwrap();
    assert!((one.fit.slope - 1.0).abs() < 0.05, "{}", one.fit.slope);
    let few = StoppingRunParams { replicas: 1, ..p };
    assert!(matches!(quantum_exponent_exact(0.5, &few, 3), Err(Error::Statistics(_))));
}

#[test]
fn r_lambda_examples() {
    let m = lebesgue(12);
    let x = [0.5; 4];
    let mut prev = 0.0;
    for lambda in [1e-3, 3e-3, 1e-2, 3e-2, 0.1] {
        let r = r_lambda(&m, &x, lambda).unwrap();
        let ball = (2.0 * lambda / (PI * PI)).powf(0.25);
        assert!((r.radius - ball).abs() <= 1.0 / 12.0, "{lambda}");
        assert!(r.radius >= prev);
        prev = r.radius;
    }
    assert!(r_lambda(&m, &x, 5.0).unwrap().capped);
    assert!(r_lambda(&m, &[1.5; 4], 0.1).is_err());
    assert!(r_lambda(&m, &x, 0.0).is_err());
}

#[test]
fn empirical_route_reduces_to_euclidean_at_zero_gamma() {
    let m = lebesgue(12);
    let copies = vec![m.clone(), m];
    let lambdas: Vec<f64> = (0..12).map(|k| 0.1 * 10f64.powf(-k as f64 / 4.0)).collect();
    let point = FractalSpec::Point { at: [0.5 + 1e-3; 4] };
    let run = quantum_exponent_empirical(&point, &copies, &lambdas).unwrap();
    assert!((run.fit.slope - 1.0).abs() < 0.1, "point {}", run.fit.slope);
    let patch = FractalSpec::PlanePatch { origin: [0.0, 0.0, 0.5 + 1e-3, 0.5 + 1e-3], side: 1.0 };
    let run = quantum_exponent_empirical(&patch, &copies, &lambdas).unwrap();
    // balls about cells near the box faces are truncated, which steepens the
    // fit on a 12^4 grid; this is the blocking band
    assert!((run.fit.slope - 0.5).abs() < 0.25, "patch {}", run.fit.slope);
    assert!(matches!(
        quantum_exponent_empirical(&point, &copies[..1], &lambdas),
        Err(Error::Statistics(_))
    ));
    let outside = FractalSpec::Point { at: [3.0; 4] };
    assert!(matches!(quantum_exponent_empirical(&outside, &copies, &lambdas), Err(Error::Range(_))));
}

/// Limit of the conditional-mean ratio from the small-radius expansions of
/// G and K0.
fn cond_mean_constant(gamma: f64, r_ref: f64) -> f64 {
    let c = gamma * gamma / (2.0 * PI * PI);
    let integral = simpson(|u| u.powf(3.0 - c) * (gamma * gamma * u * u / (4.0 * PI * PI)).exp(), 0.0, 1.0, 20_000);
    let shift = 2f64.ln() + 0.5 - EULER_GAMMA - 2.0 * PI * PI * g_variance(r_ref).unwrap();
    2.0 * PI * PI * 2f64.powf(c) * (-c * EULER_GAMMA).exp() * ((4.0 - c) * shift).exp() * integral
}

#[test]
fn cond_mean_ratio_is_frozen() {
    let c = cond_mean_constant(PI, 1.0);
    let mut prev = f64::INFINITY;
    for t in [5.0, 10.0, 20.0] {
        let p = cond_mean_profile(t, 1.0, PI, 0.0).unwrap();
        let ratio = p.ratio();
        assert!((5.2..=5.4).contains(&ratio), "t = {t}: {ratio}");
        assert!((ratio / c - 1.0).abs() < 2e-3, "t = {t}: {ratio} vs {c}");
        let per_t = ratio.ln().abs() / t;
        assert!(per_t < prev);
        prev = per_t;
    }
    assert!(cond_mean_profile(0.0, 1.0, PI, 0.0).is_err());
}

#[test]
fn tail_bound_and_synthetic_rates() {
    let p = TailParams {
        delta: PI * PI,
        rho: 0.9,
        a_grid: vec![0.2, 0.4, 0.6, 0.8, 1.0],
    };
    let g2 = PI * PI;
    let want = 2.0 * 0.9 / PI * (8.0 * g2 - g2 - g2 / 0.9 - g2);
    assert!((p.bound_rate(PI) - want).abs() < 1e-12);
    assert!((p.bound_rate(PI) - 27.65).abs() < 0.01);
    // masses e^{-gamma E} with E ~ Exp(mu) have P(mass <= e^{-A gamma}) = e^{-mu A}
    let mu = 3.0;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let masses: Vec<f64> = (0..50_000).map(|_| (-PI * Exp::new(mu).unwrap().sample(&mut rng)).exp()).collect();
    let run = tail_probability_experiment(&p, PI, &masses).unwrap();
    let fit = run.fit.unwrap();
    assert!((run.mc_rate().unwrap() - mu).abs() < 4.5 * fit.stderr, "{:?}", fit);
    assert!(!run.decays_fast_enough());
    assert!(run.censored.is_empty());
    let bad = TailParams { rho: 0.5, ..p.clone() };
    assert!(matches!(bad.validate(PI), Err(Error::Domain(_))));
    assert!(matches!(tail_probability_experiment(&p, PI, &[0.5]), Err(Error::Statistics(_))));
}

#[test]
fn unit_tilted_ball_has_unit_volume() {
    let r = ball_radius_unit_tilted(PI).unwrap();
    let f = |u: f64| if u == 0.0 { 0.0 } else { u.powi(3) * gff4d::chaos::tilt_factor(r * u, PI) };
    let v = 2.0 * PI * PI * r.powi(4) * simpson(f, 0.0, 1.0, 200_000);
    assert!((v - 1.0).abs() < 1e-6, "{v}");
    let grid = tail_grid(r, 5).unwrap();
    assert_eq!(grid.locate(&[0.0; 4]), Some(grid.len() / 2));
    assert!(tail_grid(r, 4).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quadratic_roundtrip(k in 0.0f64..=1.0, gamma in 0.01f64..4.4) {
        let kappa = kpz_quadratic(k, gamma).unwrap();
        prop_assert!(kappa <= k + 1e-15);
        prop_assert!((kpz_inverse(kappa, gamma).unwrap() - k).abs() < 1e-12);
    }

    #[test]
    fn inverse_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, gamma in 0.01f64..4.4) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(kpz_inverse(lo, gamma).unwrap() <= kpz_inverse(hi, gamma).unwrap());
        prop_assert!((kpz_inverse(lo, gamma).unwrap() - kpz_root(lo, gamma)).abs() < 1e-10);
    }
}
