//! C ABI for gff4d.
//!
//! Every function returns a `Gff4dStatus`; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! `gff4d_last_error_message`. Handles are opaque and must be released with
//! their `_free` function.

use gff4d::config::{ExperimentConfig, Subcommand};
use gff4d::field::{make_sampler, Backend, FieldSampler, GridSpec, ScaleLadder};
use gff4d::kpz::{kpz_inverse, kpz_quadratic, simulate_stopping_time, StoppingRunParams};
use gff4d::special::{bessel_i, bessel_j, bessel_k, BesselOrder};
use gff4d::{kernels, Error};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gff4dStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Overflow = 3,
    Quadrature = 4,
    UnsupportedRegime = 5,
    Capacity = 6,
    IllConditioned = 7,
    Embedding = 8,
    Statistics = 9,
    Range = 10,
    Config = 11,
    Io = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gff4dBackend {
    Auto = 0,
    Dense = 1,
    Circulant = 2,
}

/// Opaque multi-level field sampler.
pub struct Gff4dSampler {
    inner: Box<dyn FieldSampler>,
    values_per_sample: usize,
}

/// Opaque experiment configuration.
pub struct Gff4dConfig {
    inner: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> Gff4dStatus {
    match e {
        Error::Domain(_) => Gff4dStatus::Domain,
        Error::Overflow(_) => Gff4dStatus::Overflow,
        Error::Quadrature { .. } => Gff4dStatus::Quadrature,
        Error::UnsupportedRegime(_) => Gff4dStatus::UnsupportedRegime,
        Error::Capacity { .. } => Gff4dStatus::Capacity,
        Error::IllConditioned { .. } => Gff4dStatus::IllConditioned,
        Error::Embedding { .. } => Gff4dStatus::Embedding,
        Error::Statistics(_) => Gff4dStatus::Statistics,
        Error::Range(_) => Gff4dStatus::Range,
        Error::Config { .. } => Gff4dStatus::Config,
        Error::Io(_) => Gff4dStatus::Io,
    }
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (Gff4dStatus, String)>) -> Gff4dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            Gff4dStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            Gff4dStatus::Panic
        }
    }
}

fn lib<T>(r: gff4d::Result<T>) -> Result<T, (Gff4dStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (Gff4dStatus, String) {
    (Gff4dStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (Gff4dStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read4(p: *const f64, what: &str) -> Result<[f64; 4], (Gff4dStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, 4).try_into().expect("length 4"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (Gff4dStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (Gff4dStatus::Config, format!("{what} is not UTF-8")))
}

/// Copy `s` with a terminating NUL into `buf`; `required` gets the needed size.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, required: *mut usize) -> Result<(), (Gff4dStatus, String)> {
    if let Some(r) = required.as_mut() {
        *r = s.len() + 1;
    }
    if buf.is_null() || len < s.len() + 1 {
        return Err((Gff4dStatus::BufferTooSmall, format!("need a buffer of {} bytes", s.len() + 1)));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Copy the calling thread's last error message (empty after success).
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null; `required` may be null.
#[no_mangle]
pub unsafe extern "C" fn gff4d_last_error_message(buf: *mut c_char, len: usize, required: *mut usize) -> Gff4dStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match write_str(&msg, buf, len, required) {
        Ok(()) => Gff4dStatus::Ok,
        Err((s, _)) => s,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gff4d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// Special functions and kernels

fn bessel(kind: fn(BesselOrder, f64) -> gff4d::Result<f64>, order: u32, x: f64, out: *mut f64) -> Gff4dStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let o = lib(BesselOrder::new(order))?;
        *out = lib(kind(o, x))?;
        Ok(())
    })
}

/// J_order(x) for order 0, 1 or 2.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn gff4d_bessel_j(order: u32, x: f64, out: *mut f64) -> Gff4dStatus {
    bessel(bessel_j, order, x, out)
}

/// I_order(x) for order 0, 1 or 2.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn gff4d_bessel_i(order: u32, x: f64, out: *mut f64) -> Gff4dStatus {
    bessel(bessel_i, order, x, out)
}

/// K_order(x) for order 0, 1 or 2.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn gff4d_bessel_k(order: u32, x: f64, out: *mut f64) -> Gff4dStatus {
    bessel(bessel_k, order, x, out)
}

/// Variance profile G(r).
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn gff4d_g_variance(r: f64, out: *mut f64) -> Gff4dStatus {
    guard(|| {
        *out_ref(out, "out")? = lib(kernels::g_variance(r))?;
        Ok(())
    })
}

/// Inverse of G.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn gff4d_g_inverse(t: f64, out: *mut f64) -> Gff4dStatus {
    guard(|| {
        *out_ref(out, "out")? = lib(kernels::g_inverse(t))?;
        Ok(())
    })
}

/// Covariance of the mu-contracted family at (x1, eps1) and (x2, eps2).
///
/// # Safety
/// `x1` and `x2` must point to 4 doubles; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn gff4d_cov_scalar(
    x1: *const f64,
    eps1: f64,
    x2: *const f64,
    eps2: f64,
    out: *mut f64,
) -> Gff4dStatus {
    guard(|| {
        let a = lib(kernels::PointScale::new(read4(x1, "x1")?, eps1))?;
        let b = lib(kernels::PointScale::new(read4(x2, "x2")?, eps2))?;
        *out_ref(out, "out")? = lib(kernels::cov_scalar(&a, &b))?;
        Ok(())
    })
}

/// kappa from K by the KPZ quadratic.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn gff4d_kpz_quadratic(k: f64, gamma: f64, out: *mut f64) -> Gff4dStatus {
    guard(|| {
        *out_ref(out, "out")? = lib(kpz_quadratic(k, gamma))?;
        Ok(())
    })
}

/// K from kappa, the root of the KPZ quadratic in [0, 1].
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn gff4d_kpz_inverse(kappa: f64, gamma: f64, out: *mut f64) -> Gff4dStatus {
    guard(|| {
        *out_ref(out, "out")? = lib(kpz_inverse(kappa, gamma))?;
        Ok(())
    })
}

/// First-passage times of the drifted log-process below log(lambda) for
/// `replicas` paths; censored paths are written as +infinity.
///
/// # Safety
/// `times` must point to `replicas` writable doubles; `censored` may be null.
#[no_mangle]
pub unsafe extern "C" fn gff4d_stopping_times(
    gamma: f64,
    lambda: f64,
    dt: f64,
    max_time: f64,
    refine: u32,
    seed: u64,
    replicas: usize,
    times: *mut f64,
    censored: *mut usize,
) -> Gff4dStatus {
    guard(|| {
        if times.is_null() {
            return Err(null("times"));
        }
        let p = StoppingRunParams {
            gamma,
            lambdas: vec![lambda],
            dt,
            replicas,
            max_time,
            refine,
        };
        let (t, c) = lib(simulate_stopping_time(&p, lambda, seed))?;
        std::slice::from_raw_parts_mut(times, replicas).copy_from_slice(&t);
        if let Some(out) = censored.as_mut() {
            *out = c;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Sampler handle

/// Sampler on the cube [origin, origin + side]^4 with n cells per axis and
/// the ladder eps0^k, k = 1..depth.
///
/// # Safety
/// `origin` must point to 4 doubles; `out` to a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn gff4d_sampler_new(
    origin: *const f64,
    side: f64,
    n: usize,
    eps0: f64,
    depth: usize,
    backend: Gff4dBackend,
    dense_cap: usize,
    out: *mut *mut Gff4dSampler,
) -> Gff4dStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = std::ptr::null_mut();
        let grid = lib(GridSpec::cube(read4(origin, "origin")?, side, n))?;
        let ladder = lib(ScaleLadder::new(eps0, depth))?;
        let choice = match backend {
            Gff4dBackend::Auto => None,
            Gff4dBackend::Dense => Some(Backend::Dense),
            Gff4dBackend::Circulant => Some(Backend::Circulant),
        };
        let inner = lib(make_sampler(&grid, &ladder, choice, dense_cap))?;
        *out = Box::into_raw(Box::new(Gff4dSampler {
            inner,
            values_per_sample: grid.len() * depth,
        }));
        Ok(())
    })
}

/// Number of doubles in one sample (levels times grid points).
///
/// # Safety
/// `sampler` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gff4d_sampler_len(sampler: *const Gff4dSampler, out: *mut usize) -> Gff4dStatus {
    guard(|| {
        let s = sampler.as_ref().ok_or_else(|| null("sampler"))?;
        *out_ref(out, "out")? = s.values_per_sample;
        Ok(())
    })
}

/// Write replica `replica` of `seed` into `buf` (level-major, then row-major).
///
/// # Safety
/// `sampler` must be a live handle; `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gff4d_sampler_draw(
    sampler: *const Gff4dSampler,
    seed: u64,
    replica: u64,
    buf: *mut f64,
    len: usize,
) -> Gff4dStatus {
    guard(|| {
        let s = sampler.as_ref().ok_or_else(|| null("sampler"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < s.values_per_sample {
            return Err((
                Gff4dStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", s.values_per_sample),
            ));
        }
        let sample = lib(s.inner.sample(seed, replica))?;
        std::slice::from_raw_parts_mut(buf, sample.values.len()).copy_from_slice(&sample.values);
        Ok(())
    })
}

/// Release a sampler; null is ignored.
///
/// # Safety
/// `sampler` must come from `gff4d_sampler_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gff4d_sampler_free(sampler: *mut Gff4dSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

// ---------------------------------------------------------------------------
// Config handle and experiment runner

/// New configuration holding the defaults.
///
/// # Safety
/// `out` must be a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn gff4d_config_new(out: *mut *mut Gff4dConfig) -> Gff4dStatus {
    guard(|| {
        *out_ref(out, "out")? = Box::into_raw(Box::new(Gff4dConfig {
            inner: ExperimentConfig::default(),
        }));
        Ok(())
    })
}

/// Set one key as in a config file line.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gff4d_config_set(
    config: *mut Gff4dConfig,
    key: *const c_char,
    value: *const c_char,
) -> Gff4dStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        let (k, v) = (read_str(key, "key")?, read_str(value, "value")?);
        lib(c.inner.set(k, v))
    })
}

/// Run a subcommand (e.g. "mgf-check") and write the output directory path
/// into `path_buf`.
///
/// # Safety
/// `config` must be a live handle; `subcommand` a NUL-terminated string;
/// `path_buf` must point to `len` bytes or be null; `required` may be null.
#[no_mangle]
pub unsafe extern "C" fn gff4d_run(
    config: *const Gff4dConfig,
    subcommand: *const c_char,
    path_buf: *mut c_char,
    len: usize,
    required: *mut usize,
) -> Gff4dStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let name = read_str(subcommand, "subcommand")?;
        let sub = Subcommand::from_name(name)
            .ok_or_else(|| (Gff4dStatus::Config, format!("unknown subcommand `{name}`")))?;
        lib(c.inner.validate(sub))?;
        let dir = lib(gff4d::cli::run(sub, &c.inner))?;
        write_str(&dir.to_string_lossy(), path_buf, len, required)
    })
}

/// Release a configuration; null is ignored.
///
/// # Safety
/// `config` must come from `gff4d_config_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gff4d_config_free(config: *mut Gff4dConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}
