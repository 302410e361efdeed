//! The exact route: first passage of the drifted log-process
//! gamma X_t - (8 pi^2 - gamma^2 / 2) t below log Lambda, its moment
//! generating function, and the quantum exponent fitted from it.

use crate::error::{domain, Error, Result};
use crate::kernels::TWO_PI2;
use crate::rng::stream_rng;
use crate::stats::{linear_fit, mean_stderr, ExponentFit, MeanEstimate};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const EIGHT_PI2: f64 = 4.0 * TWO_PI2;
/// Censoring budget as a fraction of replicas.
pub const CENSOR_BUDGET: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRunParams {
    pub gamma: f64,
    /// Decreasing thresholds in (0, 1).
    pub lambdas: Vec<f64>,
    pub dt: f64,
    pub replicas: usize,
    pub max_time: f64,
    /// Bisection depth for steps that end near the next threshold (0 gives
    /// plain fixed-step monitoring).
    #[serde(default)]
    pub refine: u32,
}

impl StoppingRunParams {
    pub fn validate(&self) -> Result<()> {
        let g2 = self.gamma * self.gamma;
        if !(g2 > 0.0 && g2 < TWO_PI2) {
            return Err(domain(format!("gamma^2 = {g2} outside (0, 2 pi^2)")));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(domain("every Lambda must lie in (0,1)"));
        }
        if self.lambdas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(domain("the Lambda ladder must be strictly decreasing"));
        }
        if !(self.dt > 0.0 && self.max_time > self.dt) {
            return Err(domain("need dt > 0 and max_time > dt"));
        }
        if self.replicas == 0 {
            return Err(Error::Statistics("at least one replica is required".into()));
        }
        Ok(())
    }

    pub fn drift(&self) -> f64 {
        EIGHT_PI2 - 0.5 * self.gamma * self.gamma
    }
}

/// First-passage times for every Lambda of the ladder; `times[j][r]` is
/// +inf when replica r was censored at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRun {
    pub lambdas: Vec<f64>,
    pub times: Vec<Vec<f64>>,
    pub censored: Vec<usize>,
}

impl StoppingRun {
    pub fn censored_fraction(&self) -> f64 {
        let n = self.times.first().map_or(1, |t| t.len().max(1));
        self.censored.iter().copied().max().unwrap_or(0) as f64 / n as f64
    }

    fn check_censoring(&self) -> Result<()> {
        let f = self.censored_fraction();
        if f >= CENSOR_BUDGET {
            return Err(Error::Statistics(format!(
                "censored fraction {f:.2e} exceeds the budget {CENSOR_BUDGET:.0e}; raise max_time"
            )));
        }
        Ok(())
    }
}

/// Steps ending within this many step standard deviations of the next
/// threshold are bisected.
const REFINE_WINDOW: f64 = 5.0;

struct PathState<'a> {
    levels: &'a [f64],
    next: usize,
    out: &'a mut [f64],
    sd_unit: f64,
}

impl PathState<'_> {
    /// Step from (t, y0) to (t + h, y1). Near the next threshold the step is
    /// split at a Brownian-bridge midpoint, which is exact in law for the
    /// drifted path; crossings are located by linear interpolation in the
    /// final sub-step.
    fn step(&mut self, rng: &mut impl rand::Rng, t: f64, y0: f64, y1: f64, h: f64, depth: u32) {
        if self.next >= self.levels.len() {
            return;
        }
        let sd = self.sd_unit * h.sqrt();
        let near = y0.min(y1) - self.levels[self.next] < REFINE_WINDOW * sd;
        if depth > 0 && near {
            let z: f64 = StandardNormal.sample(rng);
            let mid = 0.5 * (y0 + y1) + 0.5 * sd * z;
            self.step(rng, t, y0, mid, 0.5 * h, depth - 1);
            self.step(rng, t + 0.5 * h, mid, y1, 0.5 * h, depth - 1);
            return;
        }
        while self.next < self.levels.len() && y1 <= self.levels[self.next] {
            let a = self.levels[self.next];
            self.out[self.next] = t + h * (y0 - a) / (y0 - y1);
            self.next += 1;
        }
    }
}

/// One path, reused for the whole ladder since the thresholds are nested.
fn one_path(p: &StoppingRunParams, seed: u64, replica: u64, out: &mut [f64]) {
    let mut rng = stream_rng(seed, replica);
    let levels: Vec<f64> = p.lambdas.iter().map(|l| l.ln()).collect();
    let b = p.drift();
    let sd = p.gamma * p.dt.sqrt();
    let mut state = PathState {
        levels: &levels,
        next: 0,
        out,
        sd_unit: p.gamma,
    };
    let (mut t, mut y) = (0.0, 0.0);
    while state.next < levels.len() && t < p.max_time {
        let z: f64 = StandardNormal.sample(&mut rng);
        let y_new = y + sd * z - b * p.dt;
        state.step(&mut rng, t, y, y_new, p.dt, p.refine);
        t += p.dt;
        y = y_new;
    }
    let next = state.next;
    for slot in out.iter_mut().skip(next) {
        *slot = f64::INFINITY;
    }
}

pub fn simulate_ladder(p: &StoppingRunParams, seed: u64) -> Result<StoppingRun> {
    p.validate()?;
    let m = p.lambdas.len();
    let rows: Vec<Vec<f64>> = (0..p.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut out = vec![0.0; m];
            one_path(p, seed, r, &mut out);
            out
        })
        .collect();
    let mut times = vec![Vec::with_capacity(p.replicas); m];
    for row in &rows {
        for (j, t) in row.iter().enumerate() {
            times[j].push(*t);
        }
    }
    let censored = times.iter().map(|ts| ts.iter().filter(|t| t.is_infinite()).count()).collect();
    Ok(StoppingRun {
        lambdas: p.lambdas.clone(),
        times,
        censored,
    })
}

/// T samples for a single Lambda (the ladder of `p` is ignored).
pub fn simulate_stopping_time(p: &StoppingRunParams, lambda: f64, seed: u64) -> Result<(Vec<f64>, usize)> {
    let single = StoppingRunParams {
        lambdas: vec![lambda],
        ..p.clone()
    };
    let run = simulate_ladder(&single, seed)?;
    Ok((run.times[0].clone(), run.censored[0]))
}

/// Rate c(s) = (gamma s^2 - 2 s (8 pi^2 - gamma^2 / 2)) / (2 gamma) with
/// E[exp(-c(s) T_Lambda)] = Lambda^(-s / gamma).
pub fn mgf_exponent(s: f64, gamma: f64) -> f64 {
    let b = EIGHT_PI2 - 0.5 * gamma * gamma;
    (gamma * s * s - 2.0 * s * b) / (2.0 * gamma)
}

/// Monte Carlo mean of exp(-c T); censored paths contribute their limit.
fn laplace(times: &[f64], c: f64) -> Result<MeanEstimate> {
    let vals: Vec<f64> = times
        .iter()
        .map(|t| if c == 0.0 { 1.0 } else if t.is_infinite() { 0.0 } else { (-c * t).exp() })
        .collect();
    mean_stderr(&vals)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfRow {
    pub s: f64,
    pub lambda: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub zscore: f64,
}

pub fn mgf_check(p: &StoppingRunParams, s_values: &[f64], seed: u64) -> Result<Vec<MgfRow>> {
    for &s in s_values {
        if !(s >= -p.gamma && s <= 0.0) {
            return Err(domain(format!("s = {s} outside [-gamma, 0]")));
        }
    }
    let run = simulate_ladder(p, seed)?;
    run.check_censoring()?;
    let mut rows = Vec::new();
    for &s in s_values {
        let c = mgf_exponent(s, p.gamma);
        for (j, &lambda) in run.lambdas.iter().enumerate() {
            let est = laplace(&run.times[j], c)?;
            let target = lambda.powf(-s / p.gamma);
            rows.push(MgfRow {
                s,
                lambda,
                estimate: est.mean,
                stderr: est.stderr,
                target,
                zscore: est.zscore(target),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactRoute {
    pub kappa: f64,
    pub gamma: f64,
    pub fit: ExponentFit,
    /// (Lambda, estimate, stderr, target) with target Lambda^kpz_inverse(kappa).
    pub rows: Vec<(f64, f64, f64, f64)>,
}

/// Fit of log E[exp(-8 pi^2 kappa T_Lambda)] against log Lambda; the slope
/// estimates K.
pub fn quantum_exponent_exact(kappa: f64, p: &StoppingRunParams, seed: u64) -> Result<ExactRoute> {
    let run = simulate_ladder(p, seed)?;
    exact_from_run(kappa, p.gamma, &run)
}

pub fn exact_from_run(kappa: f64, gamma: f64, run: &StoppingRun) -> Result<ExactRoute> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(domain(format!("kappa must lie in [0,1], got {kappa}")));
    }
    if run.times.first().map_or(0, |t| t.len()) < 2 {
        return Err(Error::Statistics("the exact route needs at least 2 replicas".into()));
    }
    run.check_censoring()?;
    let k_target = super::kpz_inverse(kappa, gamma)?;
    let c = EIGHT_PI2 * kappa;
    let mut rows = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (j, &lambda) in run.lambdas.iter().enumerate() {
        let est = laplace(&run.times[j], c)?;
        if !(est.mean > 0.0) {
            return Err(Error::Statistics(format!("zero Laplace estimate at Lambda = {lambda}")));
        }
        rows.push((lambda, est.mean, est.stderr, lambda.powf(k_target)));
        x.push(lambda.ln());
        y.push(est.mean.ln());
    }
    Ok(ExactRoute {
        kappa,
        gamma,
        fit: linear_fit(&x, &y)?,
        rows,
    })
}
