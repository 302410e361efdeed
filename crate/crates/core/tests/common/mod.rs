//! Independent reference values for the integration tests. Nothing here calls
//! the library's own special functions.
#![allow(dead_code)]

use std::f64::consts::PI;

/// J_n(x) from (1/2pi) int_0^{2pi} cos(n t - x sin t) dt. The integrand is
/// periodic and smooth, so the trapezoid rule converges geometrically.
pub fn j_ref(n: u32, x: f64) -> f64 {
    let m = 256 + 4 * x.ceil() as usize;
    let h = 2.0 * PI / m as f64;
    (0..m).map(|i| {
        let t = i as f64 * h;
        (n as f64 * t - x * t.sin()).cos()
    }).sum::<f64>() / m as f64
}

/// I_n(x) from (1/2pi) int_0^{2pi} e^{x cos t} cos(n t) dt.
pub fn i_ref(n: u32, x: f64) -> f64 {
    let m = 256 + 4 * x.ceil() as usize;
    let h = 2.0 * PI / m as f64;
    (0..m).map(|i| {
        let t = i as f64 * h;
        (x * t.cos()).exp() * (n as f64 * t).cos()
    }).sum::<f64>() / m as f64
}

/// K_n(x) from int_0^inf e^{-x cosh t} cosh(n t) dt, trapezoid on a range
/// where the integrand has decayed below 1e-300 of its peak.
pub fn k_ref(n: u32, x: f64) -> f64 {
    let top = (2.0 * 700.0 / x).ln().max(1.0) + 1.0;
    let m = 40_000;
    let h = top / m as f64;
    let f = |t: f64| (-x * t.cosh()).exp() * (n as f64 * t).cosh();
    h * (0.5 * f(0.0) + (1..=m).map(|i| f(i as f64 * h)).sum::<f64>())
}

/// Power series of J_n, usable for moderate x.
pub fn j_series(n: u32, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut fact_n = 1.0;
    for k in 1..=n {
        fact_n *= k as f64;
    }
    let mut term = h.powi(n as i32) / fact_n;
    let mut sum = term;
    for m in 1..200 {
        term *= -h * h / (m as f64 * (m + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Power series of I_n.
pub fn i_series(n: u32, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut fact_n = 1.0;
    for k in 1..=n {
        fact_n *= k as f64;
    }
    let mut term = h.powi(n as i32) / fact_n;
    let mut sum = term;
    for m in 1..400 {
        term *= h * h / (m as f64 * (m + n) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// K0 via its series: -(ln(x/2) + gamma) I0(x) + sum (x^2/4)^k / (k!)^2 H_k.
pub fn k0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut s = 0.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        harmonic += 1.0 / k as f64;
        s += term * harmonic;
        if term * harmonic < 1e-18 * s.abs().max(1e-300) {
            break;
        }
    }
    -((0.5 * x).ln() + EULER_GAMMA) * i_series(0, x) + s
}

/// Composite Simpson rule on [a, b] with n (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Sample mean and its standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Sample covariance of paired values and a standard error for it.
pub fn cov_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (ma, _) = mean_se(a);
    let (mb, _) = mean_se(b);
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    mean_se(&prods)
}
