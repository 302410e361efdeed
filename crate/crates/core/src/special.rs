//! Bessel functions J, I, K of orders 0, 1 and 2 on the positive half line.
//!
//! Power series cover small arguments, Miller's backward recurrence the middle
//! range of J, Hankel expansions the large range, and the Steed/Temme continued
//! fraction handles K above x = 2.

use crate::error::{domain, Error, Result};
use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const J_SERIES_MAX: f64 = 5.0;
const J_ASYMPTOTIC_MIN: f64 = 25.0;
const I_ASYMPTOTIC_MIN: f64 = 25.0;
const K_SERIES_MAX: f64 = 2.0;
const I_OVERFLOW_MIN: f64 = 705.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BesselOrder {
    Zero,
    One,
    Two,
}

impl BesselOrder {
    pub fn new(k: u32) -> Result<Self> {
        match k {
            0 => Ok(BesselOrder::Zero),
            1 => Ok(BesselOrder::One),
            2 => Ok(BesselOrder::Two),
            _ => Err(domain(format!("Bessel order {k} not supported (only 0, 1, 2)"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            BesselOrder::Zero => 0,
            BesselOrder::One => 1,
            BesselOrder::Two => 2,
        }
    }
}

impl TryFrom<u32> for BesselOrder {
    type Error = Error;
    fn try_from(k: u32) -> Result<Self> {
        BesselOrder::new(k)
    }
}

fn check_arg(x: f64, allow_zero: bool) -> Result<()> {
    if !x.is_finite() {
        return Err(domain(format!("non-finite Bessel argument {x}")));
    }
    if x < 0.0 || (!allow_zero && x == 0.0) {
        return Err(domain(format!("Bessel argument must be positive, got {x}")));
    }
    Ok(())
}

pub fn bessel_j(order: BesselOrder, x: f64) -> Result<f64> {
    check_arg(x, true)?;
    Ok(j_all(x)[order.index()])
}

/// I_k(x). Returns an overflow error where the value is not representable;
/// use [`bessel_i_scaled`] beyond that.
pub fn bessel_i(order: BesselOrder, x: f64) -> Result<f64> {
    check_arg(x, true)?;
    if x >= I_OVERFLOW_MIN {
        return Err(Error::Overflow(format!(
            "I_{}({x}) exceeds the f64 range; use the scaled form",
            order.index()
        )));
    }
    Ok(i_all(x)[order.index()])
}

/// e^{-x} I_k(x).
pub fn bessel_i_scaled(order: BesselOrder, x: f64) -> Result<f64> {
    check_arg(x, true)?;
    Ok(i_all_scaled(x)[order.index()])
}

pub fn bessel_k(order: BesselOrder, x: f64) -> Result<f64> {
    check_arg(x, false)?;
    Ok(k_all(x)[order.index()])
}

/// e^{x} K_k(x).
pub fn bessel_k_scaled(order: BesselOrder, x: f64) -> Result<f64> {
    check_arg(x, false)?;
    Ok(k_all_scaled(x)[order.index()])
}

// ---------------------------------------------------------------------------
// J

/// [J0, J1, J2] at x >= 0.
pub fn j_all(x: f64) -> [f64; 3] {
    if x == 0.0 {
        [1.0, 0.0, 0.0]
    } else if x < J_SERIES_MAX {
        [j_series(0, x), j_series(1, x), j_series(2, x)]
    } else if x < J_ASYMPTOTIC_MIN {
        j_miller(x)
    } else {
        let (s, c) = x.sin_cos();
        [j_hankel(0, x, s, c), j_hankel(1, x, s, c), j_hankel(2, x, s, c)]
    }
}

/// (J1, J2) at x >= 0; the hot path of the oscillatory quadrature.
#[inline]
pub fn j12(x: f64) -> (f64, f64) {
    if x >= J_ASYMPTOTIC_MIN {
        let (s, c) = x.sin_cos();
        (j_hankel(1, x, s, c), j_hankel(2, x, s, c))
    } else {
        let j = j_all(x);
        (j[1], j[2])
    }
}

fn j_series(n: u32, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = (0.5 * x).powi(n as i32) / factorial(n);
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + n as f64));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        k += 1.0;
    }
    sum
}

fn j_miller(x: f64) -> [f64; 3] {
    let mut m = x.ceil() as usize + 40;
    if m % 2 == 1 {
        m += 1;
    }
    let two_over_x = 2.0 / x;
    let mut jp = 0.0;
    let mut j = 1e-30;
    let mut norm = 0.0;
    let mut out = [0.0; 3];
    for k in (1..=m).rev() {
        let jm = k as f64 * two_over_x * j - jp;
        jp = j;
        j = jm;
        // j now holds the unnormalized J_{k-1}
        let km1 = k - 1;
        if km1 <= 2 {
            out[km1] = j;
        }
        if km1 % 2 == 0 && km1 > 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += j;
    [out[0] / norm, out[1] / norm, out[2] / norm]
}

/// Hankel expansion of J_n given sin(x), cos(x).
fn j_hankel(n: u32, x: f64, sx: f64, cx: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let (p, q) = hankel_pq(mu, x);
    // chi = x - (n/2 + 1/4) pi
    let (sp, cp) = match n {
        0 => (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        1 => (1.0 * FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
        _ => (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    };
    // sin(pi/4 + n pi/2) = sp, cos(pi/4 + n pi/2) = cp
    let cos_chi = cx * cp + sx * sp;
    let sin_chi = sx * cp - cx * sp;
    (2.0 / (PI * x)).sqrt() * (p * cos_chi - q * sin_chi)
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Hankel P and Q sums for 4n^2 = mu, truncated at the smallest term.
fn hankel_pq(mu: f64, x: f64) -> (f64, f64) {
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (8.0 * kf * x);
        let mag = term.abs();
        if mag > last || mag < 1e-18 {
            break;
        }
        last = mag;
        // (-1)^{floor(k/2)} pattern: a1 -> Q(+), a2 -> P(-), a3 -> Q(-), a4 -> P(+)
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term == 0.0 {
            break;
        }
    }
    (p, q)
}

// ---------------------------------------------------------------------------
// I

/// [I0, I1, I2]; overflows to infinity past ~713, callers check.
pub fn i_all(x: f64) -> [f64; 3] {
    if x < I_ASYMPTOTIC_MIN {
        [i_series(0, x), i_series(1, x), i_series(2, x)]
    } else {
        let s = i_all_scaled(x);
        let e = x.exp();
        [s[0] * e, s[1] * e, s[2] * e]
    }
}

/// [e^{-x} I0, e^{-x} I1, e^{-x} I2].
pub fn i_all_scaled(x: f64) -> [f64; 3] {
    if x < I_ASYMPTOTIC_MIN {
        let e = (-x).exp();
        [i_series(0, x) * e, i_series(1, x) * e, i_series(2, x) * e]
    } else {
        [i_asym_scaled(0, x), i_asym_scaled(1, x), i_asym_scaled(2, x)]
    }
}

fn i_series(n: u32, x: f64) -> f64 {
    (0.5 * x).powi(n as i32) * i_reduced(n, x)
}

/// I_n(x) (2/x)^n = sum_k (x^2/4)^k / (k! (k+n)!), free of the x^n factor.
pub fn i_reduced(n: u32, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0 / factorial(n);
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + n as f64));
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
        k += 1.0;
    }
    sum
}

fn i_asym_scaled(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (8.0 * kf * x);
        if term.abs() > last || term.abs() < 1e-18 {
            break;
        }
        last = term.abs();
        sum += term;
    }
    sum / (2.0 * PI * x).sqrt()
}

// ---------------------------------------------------------------------------
// K

/// [K0, K1, K2] at x > 0.
pub fn k_all(x: f64) -> [f64; 3] {
    if x <= K_SERIES_MAX {
        let (k0, k1) = k01_series(x);
        [k0, k1, k0 + 2.0 * k1 / x]
    } else {
        let e = (-x).exp();
        let s = k_all_scaled(x);
        [s[0] * e, s[1] * e, s[2] * e]
    }
}

/// [e^x K0, e^x K1, e^x K2].
pub fn k_all_scaled(x: f64) -> [f64; 3] {
    if x <= K_SERIES_MAX {
        let e = x.exp();
        let k = k_all(x);
        [k[0] * e, k[1] * e, k[2] * e]
    } else {
        let (k0, k1) = k01_steed_scaled(x);
        [k0, k1, k0 + 2.0 * k1 / x]
    }
}

/// K1(x) - 1/x, computed without cancellation for small x.
pub fn k1_minus_inv(x: f64) -> f64 {
    if x <= K_SERIES_MAX {
        x * k1_regular_over_x(x)
    } else {
        k_all(x)[1] - 1.0 / x
    }
}

/// (K1(x) - 1/x) / x, finite down to the smallest positive x.
pub fn k1_minus_inv_over_x(x: f64) -> f64 {
    if x <= K_SERIES_MAX {
        k1_regular_over_x(x)
    } else {
        (k_all(x)[1] - 1.0 / x) / x
    }
}

fn k01_series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let l = (0.5 * x).ln();
    let i0 = i_reduced(0, x);
    // K0 = -(ln(x/2) + gamma) I0 + sum_{k>=1} H_k q^k / (k!)^2
    let mut term = 1.0;
    let mut h = 0.0;
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        h += 1.0 / k;
        let t = h * term;
        sum += t;
        if t < 1e-17 * sum.max(1e-300) {
            break;
        }
        k += 1.0;
    }
    let k0 = -(l + EULER_GAMMA) * i0 + sum;
    (k0, 1.0 / x + x * k1_regular_over_x(x))
}

fn k1_regular_over_x(x: f64) -> f64 {
    // [ln(x/2) I1 - (x/4) sum_k (psi(k+1) + psi(k+2)) q^k / (k! (k+1)!)] / x
    let q = 0.25 * x * x;
    let mut psi1 = -EULER_GAMMA; // psi(k+1)
    let mut psi2 = 1.0 - EULER_GAMMA; // psi(k+2)
    let mut term = 1.0; // q^k / (k! (k+1)!)
    let mut sum = psi1 + psi2;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + 1.0));
        psi1 += 1.0 / k;
        psi2 += 1.0 / (k + 1.0);
        let t = (psi1 + psi2) * term;
        sum += t;
        if t.abs() <= 1e-17 * sum.abs() {
            break;
        }
        k += 1.0;
    }
    0.5 * (0.5 * x).ln() * i_reduced(1, x) - 0.25 * sum
}

/// Steed's continued fraction (Temme's form) for e^x K0 and e^x K1, x > 2.
fn k01_steed_scaled(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..10_000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from 50-digit arbitrary precision evaluation.
    const J_REF: [(f64, [f64; 3]); 4] = [
        (1.0, [0.765_197_686_557_966_55, 0.440_050_585_744_933_52, 0.114_903_484_931_900_48]),
        (7.5, [0.266_339_657_880_378_4, 0.135_248_427_579_705_51, -0.230_273_410_525_790_26]),
        (30.0, [-0.086_367_983_581_040_21, -0.118_751_062_616_622_94, 0.078_451_246_073_265_35]),
        (100.0, [0.019_985_850_304_223_12, -0.077_145_352_014_112_16, -0.021_528_757_344_505_37]),
    ];

    #[test]
    fn j_reference_values() {
        for (x, want) in J_REF {
            let got = j_all(x);
            for k in 0..3 {
                assert!((got[k] - want[k]).abs() < 1e-13, "J{k}({x}) = {} want {}", got[k], want[k]);
            }
        }
    }

    #[test]
    fn branches_agree_at_crossovers() {
        let x = J_SERIES_MAX;
        let m = j_miller(x);
        for k in 0..3 {
            assert!((j_series(k as u32, x) - m[k]).abs() < 1e-14);
        }
        let x = J_ASYMPTOTIC_MIN;
        let m = j_miller(x);
        let (s, c) = x.sin_cos();
        for k in 0..3 {
            assert!((j_hankel(k as u32, x, s, c) - m[k]).abs() < 1e-14);
        }
        let x = I_ASYMPTOTIC_MIN;
        for k in 0..3u32 {
            let series = i_series(k, x) * (-x).exp();
            assert!((i_asym_scaled(k, x) / series - 1.0).abs() < 1e-13);
        }
        let x = K_SERIES_MAX;
        let (k0, k1) = k01_series(x);
        let (s0, s1) = k01_steed_scaled(x);
        let e = (-x).exp();
        assert!((s0 * e / k0 - 1.0).abs() < 1e-13);
        assert!((s1 * e / k1 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn limits_at_zero() {
        assert_eq!(bessel_j(BesselOrder::Zero, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(BesselOrder::One, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_i(BesselOrder::Zero, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i(BesselOrder::Two, 0.0).unwrap(), 0.0);
        assert!(bessel_k(BesselOrder::Zero, 0.0).is_err());
    }

    #[test]
    fn errors() {
        assert!(BesselOrder::new(3).is_err());
        assert!(bessel_j(BesselOrder::One, f64::NAN).is_err());
        assert!(bessel_k(BesselOrder::One, -1.0).is_err());
        assert!(matches!(bessel_i(BesselOrder::Zero, 800.0), Err(Error::Overflow(_))));
        assert!(bessel_i_scaled(BesselOrder::Zero, 800.0).unwrap() > 0.0);
    }

    #[test]
    fn k1_regular_part_small() {
        // K1(x) - 1/x ~ (x/2) ln(x/2) + ... -> 0
        let v = k1_minus_inv(1e-8);
        assert!(v.abs() < 1e-6);
        let x = 1.5;
        assert!((k1_minus_inv(x) - (k_all(x)[1] - 1.0 / x)).abs() < 1e-14);
    }
}
