//! Command-line orchestration: parse the config, run one experiment, and
//! write its CSV/JSON artifacts into a directory keyed by the config hash.

use crate::chaos::{
    bootstrap_monotone_fraction, cauchy_decay_stats, density_field, level_masses, spacing_resolves, BoxRegion,
};
use crate::config::{BackendChoice, ExperimentConfig, Subcommand};
use crate::error::{Error, Result};
use crate::field::{make_sampler, map_replicas, Backend, FieldSampler, GridSpec, ScaleLadder};
use crate::kernels::{
    classify_regime, cov_overlap_quadrature, cov_scalar, cov_scalar_at, mu_contracted_oracle, PointScale, Regime,
};
use crate::kpz::{
    ball_radius_unit_tilted, kpz_inverse, kpz_quadratic, mgf_check, quantum_exponent_empirical,
    quantum_exponent_exact, tail_grid, tail_probability_experiment, tilted_ball_mass, StoppingRunParams,
};
use crate::rng::stream_rng;
use crate::stats::{geometric_ladder, mean_stderr};
use clap::{Parser, ValueEnum};
use rand::Rng;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    CovCheck,
    SampleField,
    MeasureStats,
    KpzExact,
    KpzEmpirical,
    MgfCheck,
    TailCheck,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::CovCheck => Subcommand::CovCheck,
            Command::SampleField => Subcommand::SampleField,
            Command::MeasureStats => Subcommand::MeasureStats,
            Command::KpzExact => Subcommand::KpzExact,
            Command::KpzEmpirical => Subcommand::KpzEmpirical,
            Command::MgfCheck => Subcommand::MgfCheck,
            Command::TailCheck => Subcommand::TailCheck,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gff4d", version, about = "Gaussian free field on R^4: kernels, chaos measures and KPZ checks")]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Command,
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key; repeatable and applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Root directory for outputs.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run_args(args) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

fn run_args(args: Args) -> Result<PathBuf> {
    let sub: Subcommand = args.command.into();
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for s in &args.set {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    cfg.validate(sub)?;
    for k in cfg.irrelevant_keys(sub) {
        eprintln!("warning: key `{k}` does not affect {}", sub.name());
    }
    if let Some(t) = cfg.threads {
        // fails harmlessly if a pool already exists (repeated in-process runs)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    run(sub, &cfg)
}

/// Files produced by one experiment, written only after it succeeds.
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone)]
pub struct Meta {
    pub subcommand: Subcommand,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    fn json(&self) -> Value {
        json!({
            "version": VERSION,
            "subcommand": self.subcommand.name(),
            "config_hash": self.config_hash,
            "seed": self.seed,
        })
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn preamble(meta: &Meta) -> Vec<u8> {
    format!(
        "# gff4d {VERSION}\n# subcommand: {}\n# config_hash: {}\n# seed: {}\n",
        meta.subcommand.name(),
        meta.config_hash,
        meta.seed
    )
    .into_bytes()
}

/// RFC-4180 CSV with a `#` metadata preamble.
pub fn csv_bytes(meta: &Meta, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut out = preamble(meta);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    out.extend(w.into_inner().map_err(|e| Error::Io(e.to_string()))?);
    Ok(out)
}

/// JSON object: metadata first, then the payload's keys in their given order.
pub fn json_bytes(meta: &Meta, payload: Value) -> Result<Vec<u8>> {
    let mut obj = meta.json();
    let map = obj.as_object_mut().expect("object");
    if let Value::Object(p) = payload {
        for (k, v) in p {
            map.insert(k, v);
        }
    }
    let mut bytes = serde_json::to_vec_pretty(&obj).map_err(|e| Error::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Run `sub` and write its artifacts to `<out>/<subcommand>-<hash>`. An
/// existing directory for the same hash is reused as is. On failure nothing
/// is left behind.
pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let hash = cfg.hash(sub);
    let dir = cfg.out.join(format!("{}-{}", sub.name(), &hash[..16]));
    if dir.is_dir() {
        eprintln!("note: reusing existing results in {}", dir.display());
        return Ok(dir);
    }
    let meta = Meta {
        subcommand: sub,
        config_hash: hash,
        seed: cfg.seed,
    };
    let artifacts = compute(sub, cfg, &meta)?;
    std::fs::create_dir_all(&cfg.out)?;
    let staging = cfg.out.join(format!(".{}-{}.partial-{}", sub.name(), &meta.config_hash[..16], std::process::id()));
    let written = write_all(&staging, &artifacts).and_then(|_| std::fs::rename(&staging, &dir).map_err(Error::from));
    if let Err(e) = written {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    Ok(dir)
}

fn write_all(dir: &Path, artifacts: &Artifacts) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &artifacts.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

pub fn compute(sub: Subcommand, cfg: &ExperimentConfig, meta: &Meta) -> Result<Artifacts> {
    match sub {
        Subcommand::CovCheck => cov_check(cfg, meta),
        Subcommand::SampleField => sample_field(cfg, meta),
        Subcommand::MeasureStats => measure_stats(cfg, meta),
        Subcommand::KpzExact => kpz_exact(cfg, meta),
        Subcommand::KpzEmpirical => kpz_empirical(cfg, meta),
        Subcommand::MgfCheck => mgf(cfg, meta),
        Subcommand::TailCheck => tail_check(cfg, meta),
    }
}

fn backend_of(cfg: &ExperimentConfig) -> Option<Backend> {
    match cfg.backend {
        BackendChoice::Auto => None,
        BackendChoice::Dense => Some(Backend::Dense),
        BackendChoice::Circulant => Some(Backend::Circulant),
    }
}

fn sampler_for(cfg: &ExperimentConfig, grid: &GridSpec, ladder: &ScaleLadder) -> Result<Box<dyn FieldSampler>> {
    if !spacing_resolves(grid, ladder) {
        eprintln!(
            "warning: grid spacing {:.4} exceeds half the finest scale {:.4}",
            grid.spacing[0],
            ladder.eps(ladder.depth)
        );
    }
    let s = make_sampler(grid, ladder, backend_of(cfg), cfg.dense_cap)?;
    let p = s.sample(cfg.seed, 0)?.provenance;
    if p.approximate {
        eprintln!(
            "warning: circulant embedding is approximate (negative spectral fraction {:.3e} clipped)",
            p.negative_fraction
        );
    }
    Ok(s)
}

// ---------------------------------------------------------------------------

const COV_TOL: f64 = 1e-6;
const OVERLAP_TOL: f64 = 1e-4;

/// Random pair in the given regime; radii in [0.02, 1.52].
fn random_pair(regime: Regime, rng: &mut impl Rng) -> Result<(PointScale, PointScale)> {
    let e1 = 0.02 + 1.5 * rng.gen::<f64>();
    let e2 = 0.02 + 1.5 * rng.gen::<f64>();
    let d = match regime {
        Regime::Concentric => 0.0,
        Regime::Inclusion => (e1 - e2).abs() * (0.01 + 0.98 * rng.gen::<f64>()),
        _ => e1 + e2 + 1e-3 + 3.0 * rng.gen::<f64>(),
    };
    let u: [f64; 4] = {
        let v: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>() - 0.5);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.map(|x| x / n)
    };
    let x = [0.3, -0.1, 0.7, 0.2];
    let y: [f64; 4] = std::array::from_fn(|i| x[i] + d * u[i]);
    Ok((PointScale::new(x, e1)?, PointScale::new(y, e2)?))
}

fn cov_check(cfg: &ExperimentConfig, meta: &Meta) -> Result<Artifacts> {
    let mut rng = stream_rng(cfg.seed, 0);
    let mut rows = Vec::new();
    let mut summary = serde_json::Map::new();
    for regime in [Regime::Concentric, Regime::Inclusion, Regime::Disjoint] {
        let mut worst: f64 = 0.0;
        for pair in 0..cfg.cov_pairs {
            let (a, b) = random_pair(regime, &mut rng)?;
            let got = classify_regime(&a, &b);
            if got != regime {
                continue;
            }
            let closed = cov_scalar(&a, &b)?;
            let oracle = mu_contracted_oracle(&a, &b)?;
            let err = (closed - oracle).abs();
            worst = worst.max(err);
            rows.push(vec![regime.name().into(), pair.to_string(), num(closed), num(oracle), num(err)]);
        }
        summary.insert(regime.name().into(), json!({"max_abs_err": worst, "pass": worst <= COV_TOL}));
    }
    // continuity across the overlap boundary d = e1 + e2
    let mut worst: f64 = 0.0;
    for pair in 0..cfg.cov_pairs.min(10) {
        let e1 = 0.1 + 0.9 * rng.gen::<f64>();
        let e2 = 0.1 + 0.9 * rng.gen::<f64>();
        let eta = 1e-7;
        let outside = cov_scalar_at(e1 + e2 + eta, e1, e2)?;
        let a = PointScale::new([0.0; 4], e1)?;
        let b = PointScale::new([e1 + e2 - eta, 0.0, 0.0, 0.0], e2)?;
        let inside = cov_overlap_quadrature(&a, &b)?;
        let err = (outside - inside).abs();
        worst = worst.max(err);
        rows.push(vec!["overlap-boundary".into(), pair.to_string(), num(outside), num(inside), num(err)]);
    }
    summary.insert("overlap_boundary".into(), json!({"max_abs_err": worst, "pass": worst <= OVERLAP_TOL}));
    let csv = csv_bytes(meta, &["regime", "pair", "closed_form", "oracle", "abs_err"], &rows)?;
    let json = json_bytes(
        meta,
        json!({"tolerance": COV_TOL, "boundary_tolerance": OVERLAP_TOL, "regimes": Value::Object(summary)}),
    )?;
    Ok(Artifacts {
        files: vec![("cov_check.csv".into(), csv), ("cov_check.json".into(), json)],
    })
}

fn sample_field(cfg: &ExperimentConfig, meta: &Meta) -> Result<Artifacts> {
    let (grid, ladder) = (cfg.grid()?, cfg.ladder()?);
    let sampler = sampler_for(cfg, &grid, &ladder)?;
    let s = sampler.sample(cfg.seed, 0)?;
    let mut bin = Vec::new();
    s.write_to(&mut bin)?;
    let json = json_bytes(meta, json!({"field": s.header()}))?;
    Ok(Artifacts {
        files: vec![("field.bin".into(), bin), ("field.json".into(), json)],
    })
}

fn measure_stats(cfg: &ExperimentConfig, meta: &Meta) -> Result<Artifacts> {
    let params = cfg.kernel_params()?;
    let (grid, ladder) = (cfg.grid()?, cfg.ladder()?);
    let region = BoxRegion::of_grid(&grid);
    let replicas = cfg.replicas_for(Subcommand::MeasureStats);
    let sampler = sampler_for(cfg, &grid, &ladder)?;
    let totals = map_replicas(sampler.as_ref(), cfg.seed, replicas, |s| level_masses(s, &region, &params))?;
    let first = sampler.sample(cfg.seed, 0)?;
    let deepest = density_field(&first, ladder.depth, &params)?;
    let mut levels = Vec::new();
    let mut rows = Vec::new();
    for n in 0..ladder.depth {
        let v: Vec<f64> = totals.iter().map(|t| t[n]).collect();
        let est = mean_stderr(&v)?;
        let second = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        let z = est.zscore(region.volume());
        levels.push(json!({
            "level": n + 1,
            "eps": ladder.eps(n + 1),
            "total_mass": v[0],
            "mean": est.mean,
            "second_moment": second,
            "stderr": est.stderr,
            "zscore": z,
        }));
        rows.push(vec![
            (n + 1).to_string(),
            num(ladder.eps(n + 1)),
            num(v[0]),
            num(est.mean),
            num(second),
            num(est.stderr),
            num(region.volume()),
            num(z),
        ]);
    }
    let cauchy = match cauchy_decay_stats(&totals, &ladder) {
        Ok(c) => {
            let frac = bootstrap_monotone_fraction(&totals, 1000, cfg.seed)?;
            json!({"stats": c, "bootstrap_monotone_fraction": frac})
        }
        Err(Error::Statistics(msg)) => json!({"skipped": msg}),
        Err(e) => return Err(e),
    };
    let csv = csv_bytes(
        meta,
        &["level", "eps", "total_mass", "estimate", "second_moment", "stderr", "target", "zscore"],
        &rows,
    )?;
    let json = json_bytes(
        meta,
        json!({
            "replicas": replicas,
            "box_volume": region.volume(),
            "levels": levels,
            "cauchy": cauchy,
            "provenance": first.provenance,
        }),
    )?;
    let mut measure_csv = preamble(meta);
    deepest.write_csv(&mut measure_csv)?;
    Ok(Artifacts {
        files: vec![
            ("measure_stats.csv".into(), csv),
            ("measure_stats.json".into(), json),
            ("measure_deepest.csv".into(), measure_csv),
        ],
    })
}

fn stopping_params(cfg: &ExperimentConfig, sub: Subcommand) -> StoppingRunParams {
    StoppingRunParams {
        gamma: cfg.gamma,
        lambdas: cfg.stopping_lambdas(sub),
        dt: cfg.dt,
        replicas: cfg.replicas_for(sub),
        max_time: cfg.max_time,
        refine: cfg.refine,
    }
}

const FIT_HEADER: [&str; 5] = ["lambda", "estimate", "stderr", "target", "zscore"];

fn kpz_exact(cfg: &ExperimentConfig, meta: &Meta) -> Result<Artifacts> {
    let spec = cfg.fractal_spec()?;
    let kappa = spec.kappa();
    let p = stopping_params(cfg, Subcommand::KpzExact);
    let route = quantum_exponent_exact(kappa, &p, cfg.seed)?;
    let rows: Vec<Vec<String>> = route
        .rows
        .iter()
        .map(|&(l, est, se, target)| {
            let z = if se > 0.0 { (est - target) / se } else { 0.0 };
            vec![num(l), num(est), num(se), num(target), num(z)]
        })
        .collect();
    let k_fit = route.fit.slope;
    let closure = kpz_quadratic(k_fit.clamp(0.0, 1.0), cfg.gamma)?;
    let json = json_bytes(
        meta,
        json!({
            "fractal": spec,
            "kappa": kappa,
            "k_theory": kpz_inverse(kappa, cfg.gamma)?,
            "fit": route.fit,
            "kappa_from_fit": closure,
            "closure_error": (closure - kappa).abs(),
        }),
    )?;
    Ok(Artifacts {
        files: vec![
            ("kpz_exact.csv".into(), csv_bytes(meta, &FIT_HEADER, &rows)?),
            ("kpz_exact.json".into(), json),
        ],
    })
}

fn kpz_empirical(cfg: &ExperimentConfig, meta: &Meta) -> Result<Artifacts> {
    let params = cfg.kernel_params()?;
    let spec = cfg.fractal_spec()?;
    let (grid, ladder) = (cfg.grid()?, cfg.ladder()?);
    let replicas = cfg.replicas_for(Subcommand::KpzEmpirical);
    let sampler = sampler_for(cfg, &grid, &ladder)?;
    let measures = map_replicas(sampler.as_ref(), cfg.seed, replicas, |s| density_field(s, ladder.depth, &params))?;
    let lambdas = match &cfg.lambdas {
        Some(l) => l.clone(),
        None => {
            let mut totals: Vec<f64> = measures.iter().map(|m| m.total_mass()).collect();
            totals.sort_by(|a, b| a.partial_cmp(b).expect("finite masses"));
            let hi = 0.1 * totals[totals.len() / 2];
            geometric_ladder(hi, hi * 10f64.powf(-cfg.lambda_decades), cfg.lambda_per_decade)?
        }
    };
    let run = quantum_exponent_empirical(&spec, &measures, &lambdas)?;
    // reference line Lambda^K_exact through the fitted intercept
    let k_theory = kpz_inverse(spec.kappa(), cfg.gamma)?;
    let mut header = FIT_HEADER.to_vec();
    header.push("used");
    let rows: Vec<Vec<String>> = run
        .rows
        .iter()
        .map(|r| {
            let target = (run.fit.intercept + k_theory * r.lambda.ln()).exp();
            let z = if r.stderr > 0.0 { (r.mean_mass - target) / r.stderr } else { 0.0 };
            vec![num(r.lambda), num(r.mean_mass), num(r.stderr), num(target), num(z), r.used.to_string()]
        })
        .collect();
    let json = json_bytes(
        meta,
        json!({
            "fractal": spec,
            "kappa": spec.kappa(),
            "k_theory": k_theory,
            "fit": run.fit,
            "floor": run.floor,
            "median_total": run.median_total,
            "replicas": replicas,
        }),
    )?;
    Ok(Artifacts {
        files: vec![
            ("kpz_empirical.csv".into(), csv_bytes(meta, &header, &rows)?),
            ("kpz_empirical.json".into(), json),
        ],
    })
}

fn mgf(cfg: &ExperimentConfig, meta: &Meta) -> Result<Artifacts> {
    let p = stopping_params(cfg, Subcommand::MgfCheck);
    let s: Vec<f64> = cfg.mgf_s_over_gamma.iter().map(|f| f * cfg.gamma).collect();
    let table = mgf_check(&p, &s, cfg.seed)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| vec![num(r.s), num(r.lambda), num(r.estimate), num(r.stderr), num(r.target), num(r.zscore)])
        .collect();
    let max_z = table.iter().map(|r| r.zscore.abs()).fold(0.0, f64::max);
    let json = json_bytes(
        meta,
        json!({"replicas": p.replicas, "dt": p.dt, "refine": p.refine, "max_abs_zscore": max_z, "rows": table}),
    )?;
    let mut header = vec!["s"];
    header.extend(FIT_HEADER);
    Ok(Artifacts {
        files: vec![("mgf_check.csv".into(), csv_bytes(meta, &header, &rows)?), ("mgf_check.json".into(), json)],
    })
}

fn tail_check(cfg: &ExperimentConfig, meta: &Meta) -> Result<Artifacts> {
    let params = cfg.kernel_params()?;
    let tp = cfg.tail_params();
    let radius = ball_radius_unit_tilted(cfg.gamma)?;
    let grid = tail_grid(radius, cfg.tail_n)?;
    let ladder = cfg.ladder()?;
    let replicas = cfg.replicas_for(Subcommand::TailCheck);
    let sampler = sampler_for(cfg, &grid, &ladder)?;
    let masses = map_replicas(sampler.as_ref(), cfg.seed, replicas, |s| {
        tilted_ball_mass(&density_field(s, ladder.depth, &params)?, radius, cfg.gamma)
    })?;
    let run = tail_probability_experiment(&tp, cfg.gamma, &masses)?;
    let rows: Vec<Vec<String>> = run
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.a),
                num(r.threshold),
                r.count.to_string(),
                num(r.prob),
                num(r.stderr),
                num(r.bound_log),
            ]
        })
        .collect();
    let json = json_bytes(
        meta,
        json!({
            "radius": radius,
            "replicas": replicas,
            "bound_rate": run.bound_rate,
            "mc_rate": run.mc_rate(),
            "fit": run.fit,
            "censored": run.censored,
            "decays_fast_enough": run.decays_fast_enough(),
        }),
    )?;
    Ok(Artifacts {
        files: vec![
            (
                "tail_check.csv".into(),
                csv_bytes(meta, &["a", "threshold", "count", "estimate", "stderr", "bound_log"], &rows)?,
            ),
            ("tail_check.json".into(), json),
        ],
    })
}
