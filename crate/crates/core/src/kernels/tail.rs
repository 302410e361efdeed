//! Analytic tails of Bessel-product integrals.
//!
//! For tau >= T every J_n(c tau) is replaced by its Hankel expansion and the
//! weight (1 + tau^2)^{-2} by its expansion in 1/tau^2. The product becomes a
//! finite sum of terms C tau^{-p} e^{i omega tau}, each integrated exactly via
//! the generalized exponential integral.

use crate::quadrature::oscillatory_power_tail;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

const HANKEL_TERMS: usize = 5;
/// Terms kept beyond the leading power, counted in units of tau^{-1/2}.
const ORDER_HALF_STEPS: usize = 8;

fn hankel_coeffs(n: u32, c: f64) -> [Complex64; HANKEL_TERMS] {
    let mu = 4.0 * (n * n) as f64;
    let theta = (0.5 * n as f64 + 0.25) * PI;
    let base = (2.0 / (PI * c)).sqrt();
    let phase = Complex64::from_polar(1.0, -theta);
    let mut out = [Complex64::new(0.0, 0.0); HANKEL_TERMS];
    let mut a = 1.0;
    let mut ik = Complex64::new(1.0, 0.0);
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= (mu - odd * odd) / (8.0 * k as f64 * c);
            ik *= Complex64::new(0.0, 1.0);
        }
        *slot = phase * ik * (base * a);
    }
    out
}

/// int_T^inf tau^q (1 + tau^2)^{-2} prod_j J_{n_j}(c_j tau) d tau.
pub(crate) fn bessel_product_tail(q: i32, factors: &[(u32, f64)], t: f64) -> f64 {
    let m = factors.len();
    let coeffs: Vec<_> = factors.iter().map(|&(n, c)| hankel_coeffs(n, c)).collect();
    // polynomial in tau^{-1/2}: index h means tau^{-h/2}, offset by the leading m
    let max_h = ORDER_HALF_STEPS;
    let mut total = Complex64::new(0.0, 0.0);
    for mask in 0..(1usize << m) {
        let mut omega = 0.0;
        let mut poly = vec![Complex64::new(0.0, 0.0); max_h + 1];
        poly[0] = Complex64::new(1.0, 0.0);
        for (j, &(_, c)) in factors.iter().enumerate() {
            let conj = mask & (1 << j) != 0;
            omega += if conj { -c } else { c };
            let mut next = vec![Complex64::new(0.0, 0.0); max_h + 1];
            for (h, &p) in poly.iter().enumerate() {
                if p == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (k, &b) in coeffs[j].iter().enumerate() {
                    let hh = h + 2 * k;
                    if hh > max_h {
                        break;
                    }
                    next[hh] += p * if conj { b.conj() } else { b };
                }
            }
            poly = next;
        }
        // weight tau^{q-4} sum_w (-1)^w (w+1) tau^{-2w}
        for (h, &p) in poly.iter().enumerate() {
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            for w in 0..=(max_h / 4) {
                if h + 4 * w > max_h {
                    break;
                }
                let coef = if w % 2 == 0 { (w + 1) as f64 } else { -((w + 1) as f64) };
                let power = (m + h) as f64 / 2.0 + 4.0 - q as f64 + 2.0 * w as f64;
                total += p * coef * oscillatory_power_tail(power, omega, t);
            }
        }
    }
    total.re / (1u64 << m) as f64
}
