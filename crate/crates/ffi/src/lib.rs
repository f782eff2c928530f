//! C interface to `wlasso`.
//!
//! Every fallible function returns a [`WlassoStatus`]; on failure the message
//! is available from [`wlasso_last_error`] on the same thread. Problems are
//! opaque handles created by one of the `wlasso_problem_*` constructors and
//! released with [`wlasso_problem_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use wlasso::bernoulli::{self, BernoulliInstance};
use wlasso::convolution::{self, ConvolutionInstance};
use wlasso::experiments::{run_experiment, to_csv, ExperimentConfig};
use wlasso::model::{make_sparse_signal, sample_poisson};
use wlasso::rng::from_seed;
use wlasso::solver::{two_step, weighted_lasso, SolverConfig, WeightVector};
use wlasso::{Error, SurrogatePair};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlassoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    DegenerateColumn = 4,
    SingularDesign = 5,
    RegimeViolation = 6,
    GuardExceeded = 7,
    ConfigError = 8,
    IoError = 9,
    /// The caller's buffer length does not match the problem dimension.
    BufferSize = 10,
    /// The requested quantity needs the true signal, which this problem lacks.
    MissingSignal = 11,
    Panic = 12,
}

/// Weight family; passed across the ABI as a `uint32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlassoWeightKind {
    Constant = 0,
    Nonconstant = 1,
    /// Needs the true signal; only for simulated problems.
    Oracle = 2,
}

/// Summary of one solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WlassoSolveInfo {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
    /// Number of coordinates with magnitude above the support threshold.
    pub support_size: usize,
}

enum Design {
    Convolution(ConvolutionInstance),
    Bernoulli(BernoulliInstance),
}

/// Opaque problem handle: design, observations and surrogate pair.
pub struct WlassoProblem {
    design: Design,
    y: Vec<f64>,
    x_star: Option<Vec<f64>>,
    surrogate: SurrogatePair,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> WlassoStatus {
    match e {
        Error::InvalidArgument(_) => WlassoStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => WlassoStatus::DimensionMismatch,
        Error::DegenerateColumn(_) => WlassoStatus::DegenerateColumn,
        Error::SingularDesign { .. } => WlassoStatus::SingularDesign,
        Error::RegimeViolation(_) => WlassoStatus::RegimeViolation,
        Error::GuardExceeded(_) => WlassoStatus::GuardExceeded,
        Error::Config(_) => WlassoStatus::ConfigError,
        Error::Io(_) => WlassoStatus::IoError,
    }
}

struct Failure(WlassoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: WlassoStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, records any failure message and converts panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WlassoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            WlassoStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            WlassoStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return fail(WlassoStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut<'a>(data: *mut f64, len: usize, expected: usize) -> Result<&'a mut [f64], Failure> {
    if data.is_null() {
        return fail(WlassoStatus::NullPointer, "output buffer is null");
    }
    if len != expected {
        return fail(WlassoStatus::BufferSize, format!("output buffer has length {len}, expected {expected}"));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

unsafe fn handle_ref<'a>(handle: *const WlassoProblem) -> Result<&'a WlassoProblem, Failure> {
    handle.as_ref().map_or_else(|| fail(WlassoStatus::NullPointer, "problem handle is null"), Ok)
}

unsafe fn store(out: *mut *mut WlassoProblem, value: WlassoProblem) -> Result<(), Failure> {
    if out.is_null() {
        return fail(WlassoStatus::NullPointer, "output handle pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn build(design: Design, y: Vec<f64>, x_star: Option<Vec<f64>>) -> Result<WlassoProblem, Failure> {
    let surrogate = match &design {
        Design::Convolution(inst) => convolution::surrogate_convolution(inst, &y)?,
        Design::Bernoulli(inst) => bernoulli::surrogate_bernoulli(inst, &y)?,
    };
    if let Some(x) = &x_star {
        if x.len() != surrogate.p() {
            return fail(WlassoStatus::DimensionMismatch, "signal length differs from the design width");
        }
    }
    Ok(WlassoProblem { design, y, x_star, surrogate })
}

/// Simulates a random-convolution problem on a circle of `p` positions with
/// `m` parents and an `s`-sparse signal of ℓ1 norm `target_l1`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn wlasso_problem_simulate_convolution(
    p: usize,
    m: u64,
    s: usize,
    target_l1: f64,
    seed: u64,
    out: *mut *mut WlassoProblem,
) -> WlassoStatus {
    guard(|| {
        let mut rng = from_seed(seed);
        let x = make_sparse_signal(p, s, target_l1, &mut rng)?.to_dense();
        let inst = convolution::sample_parents(p, m, &mut rng)?;
        let y = sample_poisson(&inst.intensity(&x)?, &mut rng)?.to_f64();
        store(out, build(Design::Convolution(inst), y, Some(x))?)
    })
}

/// Simulates a Bernoulli(`q`) sensing problem with `n` measurements.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn wlasso_problem_simulate_bernoulli(
    n: usize,
    p: usize,
    q: f64,
    s: usize,
    target_l1: f64,
    seed: u64,
    out: *mut *mut WlassoProblem,
) -> WlassoStatus {
    guard(|| {
        let mut rng = from_seed(seed);
        let x = make_sparse_signal(p, s, target_l1, &mut rng)?.to_dense();
        let inst = bernoulli::sample_bernoulli_matrix(n, p, q, &mut rng)?;
        let y = sample_poisson(&inst.intensity(&x)?, &mut rng)?.to_f64();
        store(out, build(Design::Bernoulli(inst), y, Some(x))?)
    })
}

/// Convolution problem from observed parent counts (length `p`) and photon
/// counts `y` (length `p`). `x_star` may be null; when given it has length
/// `p` and enables oracle weights.
///
/// # Safety
/// Non-null pointers must reference arrays of length `p`; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn wlasso_problem_from_counts(
    counts: *const u64,
    p: usize,
    y: *const f64,
    x_star: *const f64,
    out: *mut *mut WlassoProblem,
) -> WlassoStatus {
    guard(|| {
        let counts = slice(counts, p, "counts")?.to_vec();
        let y = slice(y, p, "y")?.to_vec();
        let x = if x_star.is_null() { None } else { Some(slice(x_star, p, "x_star")?.to_vec()) };
        let inst = ConvolutionInstance::from_counts(counts)?;
        store(out, build(Design::Convolution(inst), y, x)?)
    })
}

/// Bernoulli problem from a row-major `n × p` matrix of 0/1 bytes and
/// counts `y` (length `n`). `x_star` may be null.
///
/// # Safety
/// `a` must reference `n·p` bytes, `y` `n` values and `x_star` (if
/// non-null) `p` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wlasso_problem_from_bernoulli(
    a: *const u8,
    n: usize,
    p: usize,
    q: f64,
    y: *const f64,
    x_star: *const f64,
    out: *mut *mut WlassoProblem,
) -> WlassoStatus {
    guard(|| {
        let Some(len) = n.checked_mul(p) else {
            return fail(WlassoStatus::InvalidArgument, "n * p overflows");
        };
        let a = slice(a, len, "a")?;
        let rows: Vec<Vec<u8>> = if p == 0 { vec![Vec::new(); n] } else { a.chunks(p).map(<[u8]>::to_vec).collect() };
        let y = slice(y, n, "y")?.to_vec();
        let x = if x_star.is_null() { None } else { Some(slice(x_star, p, "x_star")?.to_vec()) };
        let inst = BernoulliInstance::from_rows(q, &rows)?;
        store(out, build(Design::Bernoulli(inst), y, x)?)
    })
}

/// Releases a problem handle. Null is ignored.
///
/// # Safety
/// `problem` must be null or a handle from a `wlasso_problem_*` constructor
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn wlasso_problem_free(problem: *mut WlassoProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Signal dimension `p`, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wlasso_problem_dim(problem: *const WlassoProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.surrogate.p())
}

/// Copies the true signal into `out` (length `p`).
///
/// # Safety
/// `problem` must be a live handle and `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn wlasso_problem_signal(
    problem: *const WlassoProblem,
    out: *mut f64,
    len: usize,
) -> WlassoStatus {
    guard(|| {
        let pr = handle_ref(problem)?;
        let Some(x) = &pr.x_star else {
            return fail(WlassoStatus::MissingSignal, "problem has no known signal");
        };
        slice_mut(out, len, x.len())?.copy_from_slice(x);
        Ok(())
    })
}

fn weight_kind(kind: u32) -> Result<WlassoWeightKind, Failure> {
    match kind {
        0 => Ok(WlassoWeightKind::Constant),
        1 => Ok(WlassoWeightKind::Nonconstant),
        2 => Ok(WlassoWeightKind::Oracle),
        _ => fail(WlassoStatus::InvalidArgument, format!("unknown weight kind {kind}")),
    }
}

fn weight_vector(pr: &WlassoProblem, kind: u32, theta: f64) -> Result<WeightVector, Failure> {
    let p = pr.surrogate.p();
    let kind = weight_kind(kind)?;
    let w = match (kind, &pr.design) {
        (WlassoWeightKind::Oracle, _) => {
            let Some(x) = &pr.x_star else {
                return fail(WlassoStatus::MissingSignal, "oracle weights need the true signal");
            };
            convolution::oracle_weights(&pr.surrogate, x)?
        }
        (_, Design::Convolution(inst)) => {
            let theta = if theta > 0.0 { theta } else { convolution::default_theta(p) };
            match kind {
                WlassoWeightKind::Constant => convolution::constant_weight_convolution(inst, &pr.y, theta)?,
                _ => convolution::nonconstant_weights_convolution(inst, &pr.y, theta)?,
            }
        }
        (_, Design::Bernoulli(inst)) => {
            let theta = if theta > 0.0 { theta } else { bernoulli::default_theta(p) };
            match kind {
                WlassoWeightKind::Constant => bernoulli::constant_weight_bernoulli(inst, &pr.y, 1.0, theta)?,
                _ => bernoulli::nonconstant_weights_bernoulli(inst, &pr.y, 1.0, theta)?,
            }
        }
    };
    Ok(w)
}

/// Writes the weight vector of the given kind (a [`WlassoWeightKind`]
/// value) into `out` (length `p`).
/// A non-positive `theta` selects the model's default tail parameter.
///
/// # Safety
/// `problem` must be a live handle and `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn wlasso_weights(
    problem: *const WlassoProblem,
    kind: u32,
    theta: f64,
    out: *mut f64,
    len: usize,
) -> WlassoStatus {
    guard(|| {
        let pr = handle_ref(problem)?;
        let w = weight_vector(pr, kind, theta)?;
        slice_mut(out, len, w.len())?.copy_from_slice(w.values());
        Ok(())
    })
}

unsafe fn solve_into(
    problem: *const WlassoProblem,
    kind: u32,
    gamma: f64,
    refit: bool,
    out: *mut f64,
    len: usize,
    info: *mut WlassoSolveInfo,
) -> Result<(), Failure> {
    let pr = handle_ref(problem)?;
    let out = slice_mut(out, len, pr.surrogate.p())?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return fail(WlassoStatus::InvalidArgument, format!("gamma must be positive, got {gamma}"));
    }
    let w = weight_vector(pr, kind, 0.0)?;
    let cfg = SolverConfig::new(gamma);
    let res = weighted_lasso(&pr.surrogate, &w, &cfg, None)?;
    let (support_size, x) = if refit {
        let (support, x) = two_step(&res, &pr.surrogate, cfg.support_eps)?;
        (support.len(), x)
    } else {
        (res.support(cfg.support_eps).len(), res.x_hat.clone())
    };
    out.copy_from_slice(&x);
    if let Some(info) = info.as_mut() {
        *info = WlassoSolveInfo {
            iterations: res.iterations,
            kkt_residual: res.kkt_residual,
            objective: res.objective,
            converged: res.converged,
            support_size,
        };
    }
    Ok(())
}

/// Weighted LASSO with weights of `kind` at penalty `gamma`; the estimate
/// goes to `out` (length `p`). `info` may be null.
///
/// # Safety
/// `problem` must be a live handle, `out` writable for `len` values and
/// `info` null or writable.
#[no_mangle]
pub unsafe extern "C" fn wlasso_solve(
    problem: *const WlassoProblem,
    kind: u32,
    gamma: f64,
    out: *mut f64,
    len: usize,
    info: *mut WlassoSolveInfo,
) -> WlassoStatus {
    guard(|| solve_into(problem, kind, gamma, false, out, len, info))
}

/// As [`wlasso_solve`], followed by a least-squares refit on the detected
/// support. `info` describes the first stage except `support_size`.
///
/// # Safety
/// Same as [`wlasso_solve`].
#[no_mangle]
pub unsafe extern "C" fn wlasso_two_step(
    problem: *const WlassoProblem,
    kind: u32,
    gamma: f64,
    out: *mut f64,
    len: usize,
    info: *mut WlassoSolveInfo,
) -> WlassoStatus {
    guard(|| solve_into(problem, kind, gamma, true, out, len, info))
}

/// Runs the experiment described by `config` (`key = value` lines) and
/// returns the CSV table in `*csv_out`, to be released with
/// [`wlasso_string_free`].
///
/// # Safety
/// `config` must be a NUL-terminated string and `csv_out` writable.
#[no_mangle]
pub unsafe extern "C" fn wlasso_experiment_csv(config: *const c_char, csv_out: *mut *mut c_char) -> WlassoStatus {
    guard(|| {
        if config.is_null() || csv_out.is_null() {
            return fail(WlassoStatus::NullPointer, "config or output pointer is null");
        }
        let Ok(text) = CStr::from_ptr(config).to_str() else {
            return fail(WlassoStatus::ConfigError, "config is not valid UTF-8");
        };
        let cfg = ExperimentConfig::from_text(text)?;
        let csv = to_csv(&run_experiment(&cfg)?);
        *csv_out = CString::new(csv).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from [`wlasso_experiment_csv`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wlasso_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn wlasso_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wlasso_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
