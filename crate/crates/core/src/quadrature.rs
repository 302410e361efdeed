//! Adaptive Gauss-Kronrod integration, Gauss-Legendre rules, and the
//! generalized exponential integral used for analytic oscillatory tails.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_580_632_698_553,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// 10-point Gauss weights, paired with XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One 21-point Kronrod panel on [a, b] for an N-vector integrand.
/// Returns (Kronrod estimate, |Kronrod - Gauss| per component).
pub fn gk21<const N: usize>(f: &mut impl FnMut(f64) -> [f64; N], a: f64, b: f64) -> ([f64; N], [f64; N]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut rk = [0.0; N];
    let mut rg = [0.0; N];
    let fc = f(c);
    for n in 0..N {
        rk[n] = WGK[10] * fc[n];
    }
    for j in 0..10 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for n in 0..N {
            let s = f1[n] + f2[n];
            rk[n] += WGK[j] * s;
            if j % 2 == 1 {
                rg[n] += WG[j / 2] * s;
            }
        }
    }
    let mut err = [0.0; N];
    for n in 0..N {
        rk[n] *= h;
        rg[n] *= h;
        err[n] = (rk[n] - rg[n]).abs();
    }
    (rk, err)
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    score: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score
    }
}
impl<const N: usize> Eq for Panel<N> {}
impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            abs_tol: 1e-10,
            max_panels: 200_000,
        }
    }
}

/// Globally adaptive GK21 over the panels delimited by `breaks`.
///
/// Error control uses the weighted norm sum_n weight[n] * err[n], so a
/// caller interested in a linear combination of the components can pass its
/// coefficients as weights.
pub fn integrate_adaptive<const N: usize>(
    mut f: impl FnMut(f64) -> [f64; N],
    breaks: &[f64],
    weights: [f64; N],
    opts: AdaptiveOptions,
) -> Result<([f64; N], f64)> {
    assert!(breaks.len() >= 2);
    let score = |e: &[f64; N]| -> f64 { e.iter().zip(weights.iter()).map(|(e, w)| e * w.abs()).sum() };
    let mut heap = BinaryHeap::with_capacity(breaks.len() * 2);
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, err) = gk21(&mut f, w[0], w[1]);
        let s = score(&err);
        total_err += s;
        heap.push(Panel { a: w[0], b: w[1], value, score: s });
    }
    while total_err > opts.abs_tol && heap.len() < opts.max_panels {
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            heap.push(worst);
            break;
        }
        total_err -= worst.score;
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, err) = gk21(&mut f, a, b);
            let s = score(&err);
            total_err += s;
            heap.push(Panel { a, b, value, score: s });
        }
    }
    // Recompute from scratch to avoid drift in the running sum.
    let mut value = [0.0; N];
    let mut err = 0.0;
    for p in heap.iter() {
        for n in 0..N {
            value[n] += p.value[n];
        }
        err += p.score;
    }
    if err > opts.abs_tol {
        return Err(Error::Quadrature {
            estimate: err,
            tolerance: opts.abs_tol,
            context: format!("{} panels used", heap.len()),
        });
    }
    Ok((value, err))
}

/// Scalar convenience wrapper.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    let (v, _) = integrate_adaptive(
        |x| [f(x)],
        &[a, b],
        [1.0],
        AdaptiveOptions {
            abs_tol,
            ..Default::default()
        },
    )?;
    Ok(v[0])
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Fixed Gauss-Legendre rule mapped to [a, b].
pub fn gl_on(nodes: &(Vec<f64>, Vec<f64>), a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    nodes.0.iter().zip(nodes.1.iter()).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// Generalized exponential integral E_p(z) = int_1^inf e^{-z t} t^{-p} dt
/// for real p > 1 and Re z >= 0. The small-|z| branch supports integer and
/// half-integer p only.
pub fn expint_e(p: f64, z: Complex64) -> Complex64 {
    if z.norm() >= 1.0 {
        expint_cf(p, z)
    } else {
        expint_series(p, z)
    }
}

fn expint_cf(p: f64, z: Complex64) -> Complex64 {
    let tiny = 1e-300;
    let mut b = z + p;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = Complex64::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 1..100_000 {
        let fi = i as f64;
        let an = -fi * (p - 1.0 + fi);
        b += 2.0;
        d = Complex64::new(1.0, 0.0) / (d * an + b);
        c = b + Complex64::new(an, 0.0) / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

fn expint_series(p: f64, z: Complex64) -> Complex64 {
    let n = p.round();
    let minus_z = -z;
    if (p - n).abs() < 1e-12 {
        let n = n as i64;
        let mut psi = -crate::special::EULER_GAMMA;
        for k in 1..n {
            psi += 1.0 / k as f64;
        }
        let mut fact = 1.0;
        for k in 1..n {
            fact *= k as f64;
        }
        let lead = if z.norm() == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            minus_z.powi((n - 1) as i32) / fact * (-z.ln() + psi)
        };
        let mut sum = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0); // (-z)^k / k!
        for k in 0..200i64 {
            if k > 0 {
                term = term * minus_z / k as f64;
            }
            if k != n - 1 {
                sum += term / (k - n + 1) as f64;
            }
            if term.norm() < 1e-18 && k > n {
                break;
            }
        }
        lead - sum
    } else {
        let m = (p - 0.5).round();
        assert!((p - 0.5 - m).abs() < 1e-12, "expint series needs integer or half-integer order");
        let m = m as i32;
        // Gamma(1/2 - m) = (-4)^m m! sqrt(pi) / (2m)!
        let mut g = std::f64::consts::PI.sqrt();
        for k in 1..=m {
            g *= -4.0 * k as f64 / ((2 * k - 1) as f64 * (2 * k) as f64);
        }
        let lead = if z.norm() == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            z.powf(p - 1.0) * g
        };
        let mut sum = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..200 {
            if k > 0 {
                term = term * minus_z / k as f64;
            }
            sum += term / (1.0 - p + k as f64);
            if term.norm() < 1e-18 {
                break;
            }
        }
        lead - sum
    }
}

/// int_T^inf tau^{-p} e^{i omega tau} d tau for p > 1, T > 0.
pub fn oscillatory_power_tail(p: f64, omega: f64, t: f64) -> Complex64 {
    if omega == 0.0 {
        return Complex64::new(t.powf(1.0 - p) / (p - 1.0), 0.0);
    }
    // substitute tau = T u: T^{1-p} E_p(-i omega T)
    expint_e(p, Complex64::new(0.0, -omega * t)) * t.powf(1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_exact_for_polynomials() {
        for deg in [0usize, 5, 19, 31] {
            let (v, e) = gk21(&mut |x: f64| [x.powi(deg as i32)], 0.0, 2.0);
            let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            assert!((v[0] - exact).abs() < 1e-12 * exact, "deg {deg}");
            if deg <= 19 {
                assert!(e[0] < 1e-11 * exact);
            }
        }
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let v = integrate(|x| (50.0 * x).sin() * x, 0.0, 3.0, 1e-12).unwrap();
        let exact = ((50.0f64 * 3.0).sin() - 150.0 * (150.0f64).cos()) / 2500.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn adaptive_reports_failure() {
        let r = integrate_adaptive(
            |x: f64| [1.0 / x.sqrt()],
            &[0.0, 1.0],
            [1.0],
            AdaptiveOptions { abs_tol: 1e-14, max_panels: 8 },
        );
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn gauss_legendre_rule() {
        let r = gauss_legendre(12);
        let v = gl_on(&r, 0.0, 1.0, |x| x.powi(23));
        assert!((v - 1.0 / 24.0).abs() < 1e-15);
        assert!((r.1.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn expint_reference_values() {
        // Frozen from 25-digit arbitrary precision evaluation.
        let cases: [(f64, f64, f64, f64); 7] = [
            (2.0, -0.5, 0.338738107514457751, 0.568317578007509451),
            (2.5, -3.0, -0.164769751521754651, -0.189676848074871521),
            (3.0, 2.0, -0.271409187549522897, -0.107735176881294919),
            (3.5, -0.3, 0.342725773373166431, 0.176041425251421892),
            (4.0, -0.9, 0.0920915029462527817, 0.282143573718551611),
            (2.0, -40.0, -0.0193863592567463426, -0.0156871553690018915),
            (5.5, 1.1, 0.0386862086412128211, -0.204877839542774315),
        ];
        for (p, im, re_want, im_want) in cases {
            let v = expint_e(p, Complex64::new(0.0, im));
            assert!((v.re - re_want).abs() < 1e-13 && (v.im - im_want).abs() < 1e-13, "E_{p}({im}i) = {v}");
        }
    }

    #[test]
    fn expint_branches_agree() {
        for p in [2.0, 3.0, 2.5, 4.5] {
            for im in [1.0, -1.0] {
                let z = Complex64::new(0.0, im);
                let a = expint_cf(p, z);
                let b = expint_series(p, z);
                assert!((a - b).norm() < 1e-13);
            }
        }
    }
}
