//! C interface to `samdp`.
//!
//! Every function returns a [`SamdpStatus`] and writes results through out
//! pointers. On failure the message is available from
//! [`samdp_last_error_message`] on the same thread until the next call.
//! Problems are opaque handles created by `samdp_problem_new_*` or
//! [`samdp_problem_from_json`] and released with [`samdp_problem_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use samdp::bounds::{azuma_tail, exp_inequality_bound, select_delta_with};
use samdp::config::ExperimentConfig;
use samdp::engine::{envelope_bound, simulate, weighted_sum, Runner, Simulation};
use samdp::mdp::{estimate_tail, gaussian_reference, Target};
use samdp::weights::{beta, beta_bounds, h_asymptotic, h_norm, weight_sum};
use samdp::{DriftFunction, Error, NoiseModel, ProblemSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotMdpRegime = 3,
    Infeasible = 4,
    Unsupported = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamdpNoiseKind {
    Rademacher = 0,
    TwoPointAdaptive = 1,
}

/// `p_min` and `p_max` are read only for the adaptive kind.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SamdpNoiseSpec {
    pub kind: SamdpNoiseKind,
    pub sigma: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamdpTarget {
    Recursion = 0,
    WeightedSum = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SamdpTailEstimate {
    pub n: u64,
    pub b_n: f64,
    pub threshold: f64,
    pub hits: u64,
    pub replicas: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rate: f64,
    pub reference_rate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SamdpTailBound {
    pub value: f64,
    pub block_term: f64,
    pub sum_term: f64,
    pub delta: f64,
    pub envelope_sup: f64,
    pub feasible_from: u64,
}

/// Opaque problem handle.
pub struct SamdpProblem {
    spec: ProblemSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

enum Failure {
    Status(SamdpStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(SamdpStatus::NullPointer, format!("{what} is null"))
}

fn bad(message: impl Into<String>) -> Failure {
    Failure::Status(SamdpStatus::InvalidArgument, message.into())
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SamdpStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let (status, message) = match outcome {
        Ok(Ok(())) => {
            set_error("");
            return SamdpStatus::Ok;
        }
        Ok(Err(Failure::Status(s, m))) => (s, m),
        Ok(Err(Failure::Lib(e))) => {
            let status = match e {
                Error::InvalidParameter { .. } | Error::MalformedTrajectory(_) => SamdpStatus::InvalidArgument,
                Error::NotMdpRegime { .. } => SamdpStatus::NotMdpRegime,
                Error::Infeasible(_) => SamdpStatus::Infeasible,
                Error::UnsupportedNoise(_) => SamdpStatus::Unsupported,
            };
            (status, e.to_string())
        }
        Err(_) => (SamdpStatus::Internal, "internal panic".to_string()),
    };
    set_error(&message);
    status
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn spec_of<'a>(p: *const SamdpProblem) -> Result<&'a ProblemSpec, Failure> {
    p.as_ref().map(|p| &p.spec).ok_or_else(|| null("problem"))
}

fn noise_model(noise: &SamdpNoiseSpec) -> Result<NoiseModel, Failure> {
    Ok(match noise.kind {
        SamdpNoiseKind::Rademacher => NoiseModel::rademacher(noise.sigma)?,
        SamdpNoiseKind::TwoPointAdaptive => NoiseModel::two_point_adaptive(noise.sigma, noise.p_min, noise.p_max)?,
    })
}

unsafe fn finish_problem(spec: ProblemSpec, out: *mut *mut SamdpProblem) -> Result<(), Failure> {
    write(out, Box::into_raw(Box::new(SamdpProblem { spec })))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn samdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Linear drift `g(x) = alpha1 (x − x_star)`.
///
/// # Safety
/// `noise` must be null or valid; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn samdp_problem_new_linear(
    alpha1: f64,
    x_star: f64,
    noise: *const SamdpNoiseSpec,
    b: f64,
    x0: f64,
    out: *mut *mut SamdpProblem,
) -> SamdpStatus {
    guard(|| {
        let noise = noise_model(noise.as_ref().ok_or_else(|| null("noise"))?)?;
        let spec = ProblemSpec::new(DriftFunction::linear(alpha1, x_star)?, noise, b, x0)?;
        finish_problem(spec, out)
    })
}

/// Drift `g(x) = −c1 u − c2 sin u` with `u = x − x_star`, `c1 > c2 > 0`.
///
/// # Safety
/// As [`samdp_problem_new_linear`].
#[no_mangle]
pub unsafe extern "C" fn samdp_problem_new_sine_linear(
    c1: f64,
    c2: f64,
    x_star: f64,
    noise: *const SamdpNoiseSpec,
    b: f64,
    x0: f64,
    out: *mut *mut SamdpProblem,
) -> SamdpStatus {
    guard(|| {
        let noise = noise_model(noise.as_ref().ok_or_else(|| null("noise"))?)?;
        let spec = ProblemSpec::new(DriftFunction::sine_linear(c1, c2, x_star)?, noise, b, x0)?;
        finish_problem(spec, out)
    })
}

/// Builds the problem described by a complete experiment config document.
///
/// # Safety
/// `json` must be null or a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn samdp_problem_from_json(json: *const c_char, out: *mut *mut SamdpProblem) -> SamdpStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| bad("config is not UTF-8"))?;
        let exp = ExperimentConfig::from_json(text)
            .and_then(|c| c.validate())
            .map_err(|e| bad(e.to_string()))?;
        finish_problem(exp.spec, out)
    })
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn samdp_problem_free(problem: *mut SamdpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// `c = b·g'(x*)`.
///
/// # Safety
/// `problem` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_problem_exponent(problem: *const SamdpProblem, out: *mut f64) -> SamdpStatus {
    guard(|| write(out, spec_of(problem)?.exponent()))
}

/// `β_k^n(c)`.
///
/// # Safety
/// `out` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_beta(c: f64, k: u64, n: u64, out: *mut f64) -> SamdpStatus {
    guard(|| write(out, beta(c, k, n).to_f64()))
}

/// # Safety
/// `lower` and `upper` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_beta_bounds(c: f64, k: u64, n: u64, lower: *mut f64, upper: *mut f64) -> SamdpStatus {
    guard(|| {
        let (lo, hi) = beta_bounds(c, k, n)?;
        write(lower, lo)?;
        write(upper, hi)
    })
}

/// # Safety
/// `out` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_weight_sum(c: f64, n: u64, out: *mut f64) -> SamdpStatus {
    guard(|| write(out, weight_sum(c, n)))
}

/// # Safety
/// `out` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_h_norm(b: f64, c: f64, n: u64, out: *mut f64) -> SamdpStatus {
    guard(|| write(out, h_norm(b, c, n)))
}

/// # Safety
/// `out` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_h_asymptotic(b: f64, c: f64, n: u64, out: *mut f64) -> SamdpStatus {
    guard(|| write(out, h_asymptotic(b, c, n)?))
}

/// `X_{n+1} − x*` for replica 0 of `seed`.
///
/// # Safety
/// `problem` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_simulate_final(
    problem: *const SamdpProblem,
    n: u64,
    seed: u64,
    out: *mut f64,
) -> SamdpStatus {
    guard(|| {
        let spec = spec_of(problem)?;
        write(out, simulate(spec, n, seed, false).final_deviation())
    })
}

/// Records `X_0..X_{n+1}` into `xs` (length `n + 2`) and `U_1..U_{n+1}` into
/// `us` (length `n + 1`). `us` may be null.
///
/// # Safety
/// `xs` must hold `xs_len` doubles and `us`, if not null, `us_len`.
#[no_mangle]
pub unsafe extern "C" fn samdp_simulate_path(
    problem: *const SamdpProblem,
    n: u64,
    seed: u64,
    xs: *mut f64,
    xs_len: usize,
    us: *mut f64,
    us_len: usize,
) -> SamdpStatus {
    guard(|| {
        let spec = spec_of(problem)?;
        if xs.is_null() {
            return Err(null("xs"));
        }
        let need = usize::try_from(n).ok().and_then(|n| n.checked_add(2)).ok_or_else(|| bad("n too large"))?;
        if xs_len < need || (!us.is_null() && us_len < need - 1) {
            return Err(Failure::Status(
                SamdpStatus::BufferTooSmall,
                format!("need {need} states and {} noise values", need - 1),
            ));
        }
        let Simulation::Path(traj) = simulate(spec, n, seed, true) else {
            unreachable!("recording always returns a path")
        };
        ptr::copy_nonoverlapping(traj.xs.as_ptr(), xs, traj.xs.len());
        if !us.is_null() {
            ptr::copy_nonoverlapping(traj.us.as_ptr(), us, traj.us.len());
        }
        Ok(())
    })
}

/// # Safety
/// `problem` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_weighted_sum(problem: *const SamdpProblem, n: u64, seed: u64, out: *mut f64) -> SamdpStatus {
    guard(|| write(out, weighted_sum(spec_of(problem)?, n, seed)?))
}

/// `F = max_k B_k` of the deterministic envelope up to horizon `n`.
///
/// # Safety
/// `problem` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_envelope_sup(problem: *const SamdpProblem, n: u64, out: *mut f64) -> SamdpStatus {
    guard(|| write(out, envelope_bound(spec_of(problem)?, n).sup))
}

/// Bound for increments in `[lows[i], highs[i]]`.
///
/// # Safety
/// `lows` and `highs` must hold `len` doubles (or be null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn samdp_azuma_tail(
    t: f64,
    lows: *const f64,
    highs: *const f64,
    len: usize,
    out: *mut f64,
) -> SamdpStatus {
    guard(|| {
        let ranges: Vec<(f64, f64)> = if len == 0 {
            Vec::new()
        } else {
            if lows.is_null() || highs.is_null() {
                return Err(null("ranges"));
            }
            let lows = std::slice::from_raw_parts(lows, len);
            let highs = std::slice::from_raw_parts(highs, len);
            lows.iter().copied().zip(highs.iter().copied()).collect()
        };
        write(out, azuma_tail(t, &ranges)?)
    })
}

/// Explicit bound on `P(|X_{n+1} − x*| ≥ epsilon)`, with `δ` selected over
/// horizons up to `n_probe ≥ n`. A `delta` of 0 selects the default `δ_max/2`.
///
/// # Safety
/// `problem` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_exp_inequality_bound(
    problem: *const SamdpProblem,
    epsilon: f64,
    n: u64,
    n_probe: u64,
    delta: f64,
    out: *mut SamdpTailBound,
) -> SamdpStatus {
    guard(|| {
        let spec = spec_of(problem)?;
        if n_probe < n {
            return Err(bad("n_probe must be at least n"));
        }
        let choice = select_delta_with(spec, epsilon, n_probe, (delta != 0.0).then_some(delta))?;
        let bound = exp_inequality_bound(spec, epsilon, n, &choice)?;
        write(
            out,
            SamdpTailBound {
                value: bound.value,
                block_term: bound.block_term,
                sum_term: bound.sum_term,
                delta: choice.delta,
                envelope_sup: choice.f_sup,
                feasible_from: choice.feasible_from,
            },
        )
    })
}

/// `2Φ̄(r b_n/σ)` and its rate `log(tail)/b_n²`.
///
/// # Safety
/// `tail` and `rate` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_gaussian_reference(r: f64, b_n: f64, sigma: f64, tail: *mut f64, rate: *mut f64) -> SamdpStatus {
    guard(|| {
        if !(sigma > 0.0 && b_n > 0.0) {
            return Err(bad("sigma and b_n must be positive"));
        }
        let g = gaussian_reference(r, b_n, sigma);
        write(tail, g.tail)?;
        write(rate, g.rate)
    })
}

/// Monte Carlo estimate of `P(h_n |statistic| > r b_n)`. `workers` of 0 uses
/// every available core; results do not depend on it.
///
/// # Safety
/// `problem` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn samdp_estimate_tail(
    problem: *const SamdpProblem,
    target: SamdpTarget,
    n: u64,
    b_n: f64,
    r: f64,
    replicas: u64,
    seed: u64,
    workers: usize,
    out: *mut SamdpTailEstimate,
) -> SamdpStatus {
    guard(|| {
        let spec = spec_of(problem)?;
        let runner = Runner::new((workers != 0).then_some(workers))?;
        let target = match target {
            SamdpTarget::Recursion => Target::Recursion,
            SamdpTarget::WeightedSum => Target::WeightedSum,
        };
        let e = estimate_tail(target, spec, n, b_n, r, replicas, seed, &runner)?;
        write(
            out,
            SamdpTailEstimate {
                n: e.n,
                b_n: e.b_n,
                threshold: e.threshold,
                hits: e.hits,
                replicas: e.replicas,
                p_hat: e.p_hat,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                rate: e.rate,
                reference_rate: e.reference_rate,
            },
        )
    })
}
