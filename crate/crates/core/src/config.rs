//! Flat `key = value` experiment configuration shared by every subcommand.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma separated.
//! Reals accept `pi` multiples such as `pi`, `1.2*pi`, `pi/2`.

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScaleLadder};
use crate::kernels::KernelParams;
use crate::kpz::{FractalSpec, TailParams};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    CovCheck,
    SampleField,
    MeasureStats,
    KpzExact,
    KpzEmpirical,
    MgfCheck,
    TailCheck,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::CovCheck,
        Subcommand::SampleField,
        Subcommand::MeasureStats,
        Subcommand::KpzExact,
        Subcommand::KpzEmpirical,
        Subcommand::MgfCheck,
        Subcommand::TailCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::CovCheck => "cov-check",
            Subcommand::SampleField => "sample-field",
            Subcommand::MeasureStats => "measure-stats",
            Subcommand::KpzExact => "kpz-exact",
            Subcommand::KpzEmpirical => "kpz-empirical",
            Subcommand::MgfCheck => "mgf-check",
            Subcommand::TailCheck => "tail-check",
        }
    }

    pub fn from_name(name: &str) -> Option<Subcommand> {
        Subcommand::ALL.into_iter().find(|s| s.name() == name)
    }

    fn uses_paths(self) -> bool {
        matches!(self, Subcommand::KpzExact | Subcommand::MgfCheck)
    }

    /// Keys that influence this subcommand; others only draw a warning.
    fn relevant(self) -> &'static [&'static str] {
        const FIELD: &[&str] = &[
            "gamma", "eps0", "r_ref", "grid_n", "box_origin", "box_side", "depth", "replicas", "backend", "dense_cap",
            "seed", "out",
        ];
        match self {
            Subcommand::CovCheck => &["cov_pairs", "seed", "out"],
            Subcommand::SampleField => &[
                "eps0", "grid_n", "box_origin", "box_side", "depth", "backend", "dense_cap", "seed", "out",
            ],
            Subcommand::MeasureStats => FIELD,
            Subcommand::KpzExact => &[
                "gamma", "lambdas", "dt", "refine", "max_time", "replicas", "fractal", "fractal_at", "fractal_radius",
                "fractal_side", "cantor_ratio", "cantor_depth", "seed", "out",
            ],
            Subcommand::KpzEmpirical => &[
                "gamma", "eps0", "r_ref", "grid_n", "box_origin", "box_side", "depth", "replicas", "backend",
                "dense_cap", "lambdas", "lambda_per_decade", "lambda_decades", "fractal", "fractal_at",
                "fractal_radius", "fractal_side", "cantor_ratio", "cantor_depth", "seed", "out",
            ],
            Subcommand::MgfCheck => &[
                "gamma", "lambdas", "dt", "refine", "max_time", "replicas", "mgf_s_over_gamma", "seed", "out",
            ],
            Subcommand::TailCheck => &[
                "gamma", "eps0", "r_ref", "depth", "replicas", "backend", "dense_cap", "tail_delta", "tail_rho",
                "tail_a", "tail_n", "seed", "out",
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Auto,
    Dense,
    Circulant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FractalKind {
    Point,
    Ball,
    PlanePatch,
    ProductCantor,
}

/// Every recognised key, in the order used for hashing and documentation.
pub const KEYS: [&str; 34] = [
    "gamma",
    "eps0",
    "r_ref",
    "grid_n",
    "box_origin",
    "box_side",
    "depth",
    "replicas",
    "seed",
    "backend",
    "dense_cap",
    "lambdas",
    "lambda_per_decade",
    "lambda_decades",
    "fractal",
    "fractal_at",
    "fractal_radius",
    "fractal_side",
    "cantor_ratio",
    "cantor_depth",
    "dt",
    "refine",
    "max_time",
    "mgf_s_over_gamma",
    "tail_delta",
    "tail_rho",
    "tail_a",
    "tail_n",
    "cov_pairs",
    "out",
    // aliases kept out of the hash
    "threads",
    "R",
    "gamma2",
    "epsilon0",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub eps0: f64,
    pub r_ref: f64,
    pub grid_n: usize,
    pub box_origin: [f64; 4],
    pub box_side: f64,
    pub depth: usize,
    /// None means the subcommand default (200 fields, 100000 paths).
    pub replicas: Option<usize>,
    pub seed: u64,
    pub backend: BackendChoice,
    pub dense_cap: usize,
    /// Explicit Lambda ladder; None means the subcommand default.
    pub lambdas: Option<Vec<f64>>,
    pub lambda_per_decade: usize,
    pub lambda_decades: f64,
    pub fractal: FractalKind,
    pub fractal_at: Option<[f64; 4]>,
    pub fractal_radius: f64,
    pub fractal_side: f64,
    pub cantor_ratio: f64,
    pub cantor_depth: u32,
    pub dt: f64,
    pub refine: u32,
    pub max_time: f64,
    pub mgf_s_over_gamma: Vec<f64>,
    pub tail_delta: f64,
    pub tail_rho: f64,
    pub tail_a: Vec<f64>,
    pub tail_n: usize,
    pub cov_pairs: usize,
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Keys explicitly set, in order of appearance.
    pub set_keys: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gamma: PI,
            eps0: 0.5,
            r_ref: 1.0,
            grid_n: 12,
            box_origin: [0.0; 4],
            box_side: 1.0,
            depth: 5,
            replicas: None,
            seed: 0,
            backend: BackendChoice::Auto,
            dense_cap: crate::field::dense::DEFAULT_DENSE_CAP,
            lambdas: None,
            lambda_per_decade: 8,
            lambda_decades: 3.0,
            fractal: FractalKind::Point,
            fractal_at: None,
            fractal_radius: 0.3,
            fractal_side: 1.0,
            cantor_ratio: 1.0 / 3.0,
            cantor_depth: 4,
            dt: 1e-5,
            refine: 12,
            max_time: 5.0,
            mgf_s_over_gamma: vec![0.0, -0.5, -1.0],
            tail_delta: PI * PI,
            tail_rho: 0.9,
            tail_a: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            tail_n: 11,
            cov_pairs: 50,
            out: PathBuf::from("gff4d-out"),
            threads: None,
            set_keys: Vec::new(),
        }
    }
}

fn cfg_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Real number, optionally a multiple or fraction of `pi`.
pub fn parse_real(key: &str, raw: &str) -> Result<f64> {
    let s: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || cfg_err(key, format!("expected a real number, got `{raw}`"));
    let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
    let v = if let Some(pos) = s.find("pi") {
        let (head, tail) = (&s[..pos], &s[pos + 2..]);
        let a = match head {
            "" => 1.0,
            "-" => -1.0,
            h => num(h.strip_suffix('*').unwrap_or(h))?,
        };
        let b = match tail {
            "" => 1.0,
            t => num(t.strip_prefix('/').ok_or_else(bad)?)?,
        };
        a * PI / b
    } else {
        num(&s)?
    };
    if !v.is_finite() {
        return Err(bad());
    }
    Ok(v)
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|t| parse_real(key, t)).collect()
}

fn parse_vec4(key: &str, raw: &str) -> Result<[f64; 4]> {
    let v = parse_list(key, raw)?;
    match v.len() {
        1 => Ok([v[0]; 4]),
        4 => Ok([v[0], v[1], v[2], v[3]]),
        n => Err(cfg_err(key, format!("expected 1 or 4 comma-separated reals, got {n}"))),
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| cfg_err(key, format!("expected a nonnegative integer, got `{}`", raw.trim())))
}

fn suggestion(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .map(|k| (strsim::levenshtein(key, k), *k))
        .filter(|(d, _)| *d <= 2)
        .min()
        .map(|(_, k)| k)
}

impl ExperimentConfig {
    /// Apply one assignment. Later assignments win.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        match key {
            "gamma" => self.gamma = parse_real(key, raw)?,
            "gamma2" => {
                let g2 = parse_real(key, raw)?;
                if g2 < 0.0 {
                    return Err(cfg_err(key, "gamma^2 must be positive"));
                }
                self.gamma = g2.sqrt();
            }
            "eps0" | "epsilon0" => self.eps0 = parse_real(key, raw)?,
            "r_ref" | "R" => self.r_ref = parse_real(key, raw)?,
            "grid_n" => self.grid_n = parse_int(key, raw)?,
            "box_origin" => self.box_origin = parse_vec4(key, raw)?,
            "box_side" => self.box_side = parse_real(key, raw)?,
            "depth" => self.depth = parse_int(key, raw)?,
            "replicas" => self.replicas = Some(parse_int(key, raw)?),
            "seed" => self.seed = parse_int(key, raw)?,
            "backend" => {
                self.backend = match raw {
                    "auto" => BackendChoice::Auto,
                    "dense" => BackendChoice::Dense,
                    "circulant" => BackendChoice::Circulant,
                    _ => return Err(cfg_err(key, format!("expected auto, dense or circulant, got `{raw}`"))),
                }
            }
            "dense_cap" => self.dense_cap = parse_int(key, raw)?,
            "lambdas" => {
                let v = parse_list(key, raw)?;
                self.lambdas = if v.is_empty() { None } else { Some(v) };
            }
            "lambda_per_decade" => self.lambda_per_decade = parse_int(key, raw)?,
            "lambda_decades" => self.lambda_decades = parse_real(key, raw)?,
            "fractal" => {
                self.fractal = match raw {
                    "point" => FractalKind::Point,
                    "ball" => FractalKind::Ball,
                    "plane_patch" => FractalKind::PlanePatch,
                    "product_cantor" => FractalKind::ProductCantor,
                    _ => {
                        return Err(cfg_err(
                            key,
                            format!("expected point, ball, plane_patch or product_cantor, got `{raw}`"),
                        ))
                    }
                }
            }
            "fractal_at" => self.fractal_at = Some(parse_vec4(key, raw)?),
            "fractal_radius" => self.fractal_radius = parse_real(key, raw)?,
            "fractal_side" => self.fractal_side = parse_real(key, raw)?,
            "cantor_ratio" => self.cantor_ratio = parse_real(key, raw)?,
            "cantor_depth" => self.cantor_depth = parse_int(key, raw)?,
            "dt" => self.dt = parse_real(key, raw)?,
            "refine" => self.refine = parse_int(key, raw)?,
            "max_time" => self.max_time = parse_real(key, raw)?,
            "mgf_s_over_gamma" => self.mgf_s_over_gamma = parse_list(key, raw)?,
            "tail_delta" => self.tail_delta = parse_real(key, raw)?,
            "tail_rho" => self.tail_rho = parse_real(key, raw)?,
            "tail_a" => self.tail_a = parse_list(key, raw)?,
            "tail_n" => self.tail_n = parse_int(key, raw)?,
            "cov_pairs" => self.cov_pairs = parse_int(key, raw)?,
            "out" => self.out = PathBuf::from(raw),
            "threads" => self.threads = Some(parse_int(key, raw)?),
            _ => {
                let hint = suggestion(key).map(|k| format!("; did you mean `{k}`?")).unwrap_or_default();
                return Err(cfg_err(key, format!("unknown key{hint}")));
            }
        }
        let canonical = canonical_key(key);
        if !self.set_keys.iter().any(|k| k == canonical) {
            self.set_keys.push(canonical.to_string());
        }
        Ok(())
    }

    /// Apply the lines of a config file body.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                cfg_err(line, format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| cfg_err(assignment, "expected key=value"))?;
        self.set(k.trim(), v)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err("config", format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn kernel_params(&self) -> Result<KernelParams> {
        KernelParams::new(self.gamma, self.eps0, self.r_ref)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::cube(self.box_origin, self.box_side, self.grid_n)
    }

    pub fn ladder(&self) -> Result<ScaleLadder> {
        ScaleLadder::new(self.eps0, self.depth)
    }

    pub fn replicas_for(&self, sub: Subcommand) -> usize {
        self.replicas.unwrap_or(if sub.uses_paths() { 100_000 } else { 200 })
    }

    fn box_center(&self) -> [f64; 4] {
        self.box_origin.map(|o| o + 0.5 * self.box_side)
    }

    pub fn fractal_spec(&self) -> Result<FractalSpec> {
        let c = self.box_center();
        let half = 0.5 * self.fractal_side;
        let spec = match self.fractal {
            FractalKind::Point => FractalSpec::Point {
                at: self.fractal_at.unwrap_or(c),
            },
            FractalKind::Ball => FractalSpec::Ball {
                center: self.fractal_at.unwrap_or(c),
                radius: self.fractal_radius,
            },
            FractalKind::PlanePatch => FractalSpec::PlanePatch {
                origin: self.fractal_at.unwrap_or([c[0] - half, c[1] - half, c[2], c[3]]),
                side: self.fractal_side,
            },
            FractalKind::ProductCantor => FractalSpec::ProductCantor {
                origin: self.fractal_at.unwrap_or(c.map(|v| v - half)),
                side: self.fractal_side,
                ratio: self.cantor_ratio,
                depth: self.cantor_depth,
            },
        };
        spec.validate().map_err(|e| cfg_err("fractal", e.to_string()))?;
        Ok(spec)
    }

    /// Threshold ladder for the stopping-time subcommands.
    pub fn stopping_lambdas(&self, sub: Subcommand) -> Vec<f64> {
        if let Some(l) = &self.lambdas {
            return l.clone();
        }
        match sub {
            Subcommand::MgfCheck => vec![0.5, 0.1, 0.01],
            _ => (0..7).map(|i| 10f64.powf(-0.5 * (i + 1) as f64)).collect(),
        }
    }

    pub fn tail_params(&self) -> TailParams {
        TailParams {
            delta: self.tail_delta,
            rho: self.tail_rho,
            a_grid: self.tail_a.clone(),
        }
    }

    /// Check every field that `sub` depends on; errors name the key.
    pub fn validate(&self, sub: Subcommand) -> Result<()> {
        let g2 = self.gamma * self.gamma;
        if !(self.gamma > 0.0 && g2 < 2.0 * PI * PI) {
            return Err(cfg_err(
                "gamma",
                format!("need 0 < gamma^2 < 2 pi^2, got gamma^2 = {g2:.6} = {:.4} pi^2", g2 / (PI * PI)),
            ));
        }
        let wrap = |key: &str, r: Result<()>| r.map_err(|e| cfg_err(key, e.to_string()));
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(cfg_err("eps0", "must lie in (0,1)"));
        }
        if !(self.r_ref > 0.0) {
            return Err(cfg_err("r_ref", "must be positive"));
        }
        if self.grid_n == 0 {
            return Err(cfg_err("grid_n", "must be positive"));
        }
        if !(self.box_side > 0.0) {
            return Err(cfg_err("box_side", "must be positive"));
        }
        if self.depth == 0 {
            return Err(cfg_err("depth", "must be positive"));
        }
        wrap("depth", self.ladder().map(|_| ()))?;
        if self.replicas == Some(0) {
            return Err(cfg_err("replicas", "must be positive"));
        }
        if let Some(l) = &self.lambdas {
            if l.iter().any(|v| !(*v > 0.0)) || l.windows(2).any(|w| w[1] >= w[0]) {
                return Err(cfg_err("lambdas", "must be positive and strictly decreasing"));
            }
            if sub.uses_paths() && l.iter().any(|v| *v >= 1.0) {
                return Err(cfg_err("lambdas", "stopping thresholds must lie in (0,1)"));
            }
        }
        if self.lambda_per_decade == 0 || !(self.lambda_decades > 0.0) {
            return Err(cfg_err("lambda_per_decade", "ladder density and span must be positive"));
        }
        self.fractal_spec()?;
        if !(self.dt > 0.0) {
            return Err(cfg_err("dt", "must be positive"));
        }
        if !(self.max_time > self.dt) {
            return Err(cfg_err("max_time", "must exceed dt"));
        }
        if self.refine > 30 {
            return Err(cfg_err("refine", "at most 30 bisection levels"));
        }
        if sub == Subcommand::MgfCheck && self.mgf_s_over_gamma.iter().any(|s| !(-1.0..=0.0).contains(s)) {
            return Err(cfg_err("mgf_s_over_gamma", "s / gamma must lie in [-1, 0]"));
        }
        if sub == Subcommand::TailCheck {
            wrap("tail_rho", self.tail_params().validate(self.gamma))?;
            if self.tail_n % 2 == 0 || self.tail_n < 3 {
                return Err(cfg_err("tail_n", "must be odd and at least 3"));
            }
        }
        if sub == Subcommand::CovCheck && self.cov_pairs == 0 {
            return Err(cfg_err("cov_pairs", "must be positive"));
        }
        Ok(())
    }

    /// Explicitly set keys that do not affect `sub`.
    pub fn irrelevant_keys(&self, sub: Subcommand) -> Vec<String> {
        self.set_keys
            .iter()
            .filter(|k| *k != "threads" && !sub.relevant().contains(&k.as_str()))
            .cloned()
            .collect()
    }

    /// Canonical text of the resolved configuration; hashed to key outputs.
    pub fn canonical(&self, sub: Subcommand) -> String {
        let fmt_list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        let mut m: BTreeMap<usize, String> = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            let idx = KEYS.iter().position(|x| *x == k).expect("known key");
            m.insert(idx, format!("{k}={v}"));
        };
        put("gamma", format!("{:e}", self.gamma));
        put("eps0", format!("{:e}", self.eps0));
        put("r_ref", format!("{:e}", self.r_ref));
        put("grid_n", self.grid_n.to_string());
        put("box_origin", fmt_list(&self.box_origin));
        put("box_side", format!("{:e}", self.box_side));
        put("depth", self.depth.to_string());
        put("replicas", self.replicas_for(sub).to_string());
        put("seed", self.seed.to_string());
        put("backend", format!("{:?}", self.backend).to_lowercase());
        put("dense_cap", self.dense_cap.to_string());
        put("lambdas", self.lambdas.as_deref().map(fmt_list).unwrap_or_else(|| "default".into()));
        put("lambda_per_decade", self.lambda_per_decade.to_string());
        put("lambda_decades", format!("{:e}", self.lambda_decades));
        put("fractal", format!("{:?}", self.fractal_spec().ok()));
        put("dt", format!("{:e}", self.dt));
        put("refine", self.refine.to_string());
        put("max_time", format!("{:e}", self.max_time));
        put("mgf_s_over_gamma", fmt_list(&self.mgf_s_over_gamma));
        put("tail_delta", format!("{:e}", self.tail_delta));
        put("tail_rho", format!("{:e}", self.tail_rho));
        put("tail_a", fmt_list(&self.tail_a));
        put("tail_n", self.tail_n.to_string());
        put("cov_pairs", self.cov_pairs.to_string());
        let mut s = format!("subcommand={}\n", sub.name());
        for line in m.values() {
            s.push_str(line);
            s.push('\n');
        }
        s
    }

    pub fn hash(&self, sub: Subcommand) -> String {
        let digest = Sha256::digest(self.canonical(sub).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn canonical_key(key: &str) -> &str {
    match key {
        "R" => "r_ref",
        "gamma2" => "gamma",
        "epsilon0" => "eps0",
        k => k,
    }
}
