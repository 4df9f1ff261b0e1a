//! C ABI for the orbitlab core: opaque handles, integer status codes, a
//! thread-local last-error message. The matching header lives in
//! `include/orbitlab.h` and is kept in sync by `tests/header_sync.rs`.
//!
//! Conventions:
//! - constructors return NULL on failure and set the thread-local error;
//! - functions returning `OrbitlabStatus` never unwind across the boundary;
//! - every handle has exactly one matching `_free`, safe to call with NULL.

use orbitlab::error::Error;
use orbitlab::expansion::{build_bundle, residual, ExpansionBundle};
use orbitlab::geometry::Scenario;
use orbitlab::harness::{run, RunConfig};
use orbitlab::loops::{energy, find_geodesic, seed_loop, DescentOptions, Loop};
use orbitlab::num::{Grid, TWO_PI};
use orbitlab::orbit::{correct_orbit, OrbitOptions};
use orbitlab::periodic_ode::{resonance_epsilon, GreenKernel};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status codes mirrored in include/orbitlab.h.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitlabStatus {
    Ok = 0,
    InvalidArgument = 1,
    TubeExit = 2,
    DegenerateNormal = 3,
    NondegeneracyViolation = 4,
    MaxItersExceeded = 5,
    ClassDrift = 6,
    NotAGeodesic = 7,
    ResonantLambda = 8,
    FixedPointDiverged = 9,
    DegenerateGeodesic = 10,
    NewtonDiverged = 11,
    SingularJacobian = 12,
    AdmissibilityFailed = 13,
    ContractionFailed = 14,
    ConfigError = 15,
    InsufficientPoints = 16,
    IoError = 17,
    ClaimFailed = 18,
    Panic = 19,
}

fn status_of(err: &Error) -> OrbitlabStatus {
    match err {
        Error::TubeExit { .. } => OrbitlabStatus::TubeExit,
        Error::DegenerateNormal { .. } => OrbitlabStatus::DegenerateNormal,
        Error::NondegeneracyViolation { .. } => OrbitlabStatus::NondegeneracyViolation,
        Error::MaxItersExceeded { .. } => OrbitlabStatus::MaxItersExceeded,
        Error::ClassDrift { .. } => OrbitlabStatus::ClassDrift,
        Error::NotAGeodesic { .. } => OrbitlabStatus::NotAGeodesic,
        Error::ResonantLambda { .. } => OrbitlabStatus::ResonantLambda,
        Error::FixedPointDiverged { .. } => OrbitlabStatus::FixedPointDiverged,
        Error::DegenerateGeodesic { .. } => OrbitlabStatus::DegenerateGeodesic,
        Error::NewtonDiverged { .. } => OrbitlabStatus::NewtonDiverged,
        Error::SingularJacobian { .. } => OrbitlabStatus::SingularJacobian,
        Error::AdmissibilityFailed { .. } => OrbitlabStatus::AdmissibilityFailed,
        Error::ContractionFailed { .. } => OrbitlabStatus::ContractionFailed,
        Error::Config { .. } => OrbitlabStatus::ConfigError,
        Error::InsufficientPoints { .. } => OrbitlabStatus::InsufficientPoints,
        Error::Invalid(_) => OrbitlabStatus::InvalidArgument,
        Error::Io(_) => OrbitlabStatus::IoError,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn record(err: &Error) -> OrbitlabStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Opaque scenario+grid pair.
pub struct OrbitlabScenario {
    scenario: Scenario,
    grid: Grid,
}

/// Opaque sampled loop.
pub struct OrbitlabLoop {
    inner: Loop,
}

/// Opaque expansion bundle.
pub struct OrbitlabBundle {
    inner: ExpansionBundle,
}

/// Flat summary of a Newton-corrected orbit.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OrbitlabOrbitSummary {
    pub eps: f64,
    pub residual_sup: f64,
    pub correction_sup: f64,
    pub correction_normal_sup: f64,
    pub cond_estimate: f64,
    pub energy_drift: f64,
    pub newton_iters: u64,
}

fn guard<T>(f: impl FnOnce() -> T, fallback: T) -> T {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(_) => {
            set_error("internal panic across FFI boundary");
            fallback
        }
    }
}

/// Version string of the underlying crate; static storage, do not free.
#[no_mangle]
pub extern "C" fn orbitlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent error on this thread; valid until the next
/// failing call on the same thread. Do not free.
#[no_mangle]
pub extern "C" fn orbitlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Create a scenario. `name` is one of "circle", "sphere", "sphere-quartic",
/// "torus". Unused parameters are ignored (pass 0). `n_samples` must be an
/// even grid size >= 64. Returns NULL on error.
///
/// # Safety
/// `name` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_scenario_new(
    name: *const c_char,
    b0: f64,
    cubic: f64,
    big_r: f64,
    small_r: f64,
    n_samples: usize,
) -> *mut OrbitlabScenario {
    guard(
        || {
            if name.is_null() {
                set_error("scenario name is NULL");
                return ptr::null_mut();
            }
            let name = match unsafe { CStr::from_ptr(name) }.to_str() {
                Ok(s) => s,
                Err(_) => {
                    set_error("scenario name is not valid UTF-8");
                    return ptr::null_mut();
                }
            };
            if n_samples < 64 || n_samples % 2 != 0 {
                set_error("n_samples must be even and >= 64");
                return ptr::null_mut();
            }
            let mut params = std::collections::BTreeMap::new();
            params.insert("b0".to_string(), b0);
            params.insert("cubic".to_string(), cubic);
            if big_r != 0.0 {
                params.insert("R".to_string(), big_r);
            }
            if small_r != 0.0 {
                params.insert("r".to_string(), small_r);
            }
            match Scenario::from_name(name, &params) {
                Ok(scenario) => Box::into_raw(Box::new(OrbitlabScenario {
                    scenario,
                    grid: Grid::spectral(n_samples),
                })),
                Err(e) => {
                    record(&e);
                    ptr::null_mut()
                }
            }
        },
        ptr::null_mut(),
    )
}

/// # Safety
/// `handle` must come from `orbitlab_scenario_new` (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn orbitlab_scenario_free(handle: *mut OrbitlabScenario) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Descend to a closed geodesic in the homotopy class given by `class`
/// (length `class_len`: 1 for the circle, 2 for the torus). NULL on error.
///
/// # Safety
/// `scenario` must be a live scenario handle; `class` must point to
/// `class_len` values.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_find_geodesic(
    scenario: *const OrbitlabScenario,
    class: *const i64,
    class_len: usize,
) -> *mut OrbitlabLoop {
    guard(
        || {
            let sc = match unsafe { scenario.as_ref() } {
                Some(s) => s,
                None => {
                    set_error("scenario handle is NULL");
                    return ptr::null_mut();
                }
            };
            if class.is_null() {
                set_error("class pointer is NULL");
                return ptr::null_mut();
            }
            let class = unsafe { std::slice::from_raw_parts(class, class_len) };
            let seeded = seed_loop(&sc.scenario, &sc.grid, class, 0.15).and_then(|seed| {
                find_geodesic(&sc.scenario, &sc.grid, &seed, class, DescentOptions::default())
            });
            match seeded {
                Ok(res) => Box::into_raw(Box::new(OrbitlabLoop { inner: res.geodesic })),
                Err(e) => {
                    record(&e);
                    ptr::null_mut()
                }
            }
        },
        ptr::null_mut(),
    )
}

/// # Safety
/// `handle` must come from a loop-returning call (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn orbitlab_loop_free(handle: *mut OrbitlabLoop) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of time samples.
///
/// # Safety
/// `handle` must be a live loop handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_loop_len(handle: *const OrbitlabLoop) -> usize {
    unsafe { handle.as_ref() }.map_or(0, |l| l.inner.n_samples())
}

/// Ambient dimension.
///
/// # Safety
/// `handle` must be a live loop handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_loop_dim(handle: *const OrbitlabLoop) -> usize {
    unsafe { handle.as_ref() }.map_or(0, |l| l.inner.dim())
}

/// Copy samples out, time-major: out[j*dim + c]. `out_len` must be at least
/// len * dim.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_loop_samples(
    handle: *const OrbitlabLoop,
    out: *mut f64,
    out_len: usize,
) -> OrbitlabStatus {
    guard(
        || {
            let lp = match unsafe { handle.as_ref() } {
                Some(l) => l,
                None => {
                    set_error("loop handle is NULL");
                    return OrbitlabStatus::InvalidArgument;
                }
            };
            let n = lp.inner.n_samples();
            let d = lp.inner.dim();
            if out.is_null() || out_len < n * d {
                set_error("output buffer too small");
                return OrbitlabStatus::InvalidArgument;
            }
            let slice = unsafe { std::slice::from_raw_parts_mut(out, n * d) };
            for j in 0..n {
                for c in 0..d {
                    slice[j * d + c] = lp.inner.samples[(j, c)];
                }
            }
            OrbitlabStatus::Ok
        },
        OrbitlabStatus::Panic,
    )
}

/// Loop energy (1/2) int |x'|^2.
///
/// # Safety
/// Handles must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_loop_energy(
    scenario: *const OrbitlabScenario,
    handle: *const OrbitlabLoop,
) -> f64 {
    guard(
        || match (unsafe { scenario.as_ref() }, unsafe { handle.as_ref() }) {
            (Some(sc), Some(lp)) => energy(&sc.grid, &lp.inner),
            _ => {
                set_error("NULL handle");
                f64::NAN
            }
        },
        f64::NAN,
    )
}

/// Build the second-order expansion bundle over a geodesic. NULL on error
/// (degenerate geodesics are rejected).
///
/// # Safety
/// Handles must be live.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_build_bundle(
    scenario: *const OrbitlabScenario,
    geodesic: *const OrbitlabLoop,
) -> *mut OrbitlabBundle {
    guard(
        || {
            let (sc, geo) = match (unsafe { scenario.as_ref() }, unsafe { geodesic.as_ref() }) {
                (Some(s), Some(g)) => (s, g),
                _ => {
                    set_error("NULL handle");
                    return ptr::null_mut();
                }
            };
            match build_bundle(&sc.scenario, &sc.grid, &geo.inner) {
                Ok(b) => Box::into_raw(Box::new(OrbitlabBundle { inner: b })),
                Err(e) => {
                    record(&e);
                    ptr::null_mut()
                }
            }
        },
        ptr::null_mut(),
    )
}

/// # Safety
/// `handle` must come from `orbitlab_build_bundle` (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn orbitlab_bundle_free(handle: *mut OrbitlabBundle) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Assemble the pseudo orbit x0 + eps f + eps^2 g at the given eps.
///
/// # Safety
/// Handles must be live.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_bundle_assemble(
    scenario: *const OrbitlabScenario,
    bundle: *const OrbitlabBundle,
    eps: f64,
) -> *mut OrbitlabLoop {
    guard(
        || {
            let (sc, b) = match (unsafe { scenario.as_ref() }, unsafe { bundle.as_ref() }) {
                (Some(s), Some(b)) => (s, b),
                _ => {
                    set_error("NULL handle");
                    return ptr::null_mut();
                }
            };
            match b.inner.assemble(&sc.scenario, eps) {
                Ok(lp) => Box::into_raw(Box::new(OrbitlabLoop { inner: lp })),
                Err(e) => {
                    record(&e);
                    ptr::null_mut()
                }
            }
        },
        ptr::null_mut(),
    )
}

/// Dual-norm residual of the pseudo orbit at eps.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_residual_dual_norm(
    scenario: *const OrbitlabScenario,
    bundle: *const OrbitlabBundle,
    eps: f64,
    out: *mut f64,
) -> OrbitlabStatus {
    guard(
        || {
            let (sc, b) = match (unsafe { scenario.as_ref() }, unsafe { bundle.as_ref() }) {
                (Some(s), Some(b)) => (s, b),
                _ => {
                    set_error("NULL handle");
                    return OrbitlabStatus::InvalidArgument;
                }
            };
            if out.is_null() {
                set_error("out pointer is NULL");
                return OrbitlabStatus::InvalidArgument;
            }
            match residual(&sc.scenario, &sc.grid, &b.inner, eps) {
                Ok(rep) => {
                    unsafe { *out = rep.dual_norm };
                    OrbitlabStatus::Ok
                }
                Err(e) => record(&e),
            }
        },
        OrbitlabStatus::Panic,
    )
}

/// Newton-correct the pseudo orbit at eps. On success writes the summary and
/// (when `out_orbit` is non-NULL) a new loop handle for the solution.
///
/// # Safety
/// Handles must be live; `summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_correct_orbit(
    scenario: *const OrbitlabScenario,
    bundle: *const OrbitlabBundle,
    eps: f64,
    summary: *mut OrbitlabOrbitSummary,
    out_orbit: *mut *mut OrbitlabLoop,
) -> OrbitlabStatus {
    guard(
        || {
            let (sc, b) = match (unsafe { scenario.as_ref() }, unsafe { bundle.as_ref() }) {
                (Some(s), Some(b)) => (s, b),
                _ => {
                    set_error("NULL handle");
                    return OrbitlabStatus::InvalidArgument;
                }
            };
            if summary.is_null() {
                set_error("summary pointer is NULL");
                return OrbitlabStatus::InvalidArgument;
            }
            match correct_orbit(&sc.scenario, &sc.grid, &b.inner, eps, &OrbitOptions::default()) {
                Ok(r) => {
                    unsafe {
                        *summary = OrbitlabOrbitSummary {
                            eps: r.eps,
                            residual_sup: r.residual_sup,
                            correction_sup: r.correction_sup,
                            correction_normal_sup: r.correction_normal_sup,
                            cond_estimate: r.cond_estimate,
                            energy_drift: r.energy_drift,
                            newton_iters: r.newton_iters as u64,
                        };
                        if !out_orbit.is_null() {
                            *out_orbit =
                                Box::into_raw(Box::new(OrbitlabLoop { inner: r.solution }));
                        }
                    }
                    OrbitlabStatus::Ok
                }
                Err(e) => record(&e),
            }
        },
        OrbitlabStatus::Panic,
    )
}

/// Resonance-avoiding epsilon: b0/eps = (2 pi (k + 1/2))^2 (period-1 time).
#[no_mangle]
pub extern "C" fn orbitlab_resonance_epsilon(b0: f64, k: usize) -> f64 {
    guard(
        || {
            if b0 <= 0.0 {
                set_error("resonance sequence needs b0 > 0");
                return f64::NAN;
            }
            resonance_epsilon(b0, k)
        },
        f64::NAN,
    )
}

/// Closed-form Green-kernel norms in the classical [0, 2pi] convention for
/// v'' + lambda v = sigma (lambda passed in the same convention).
///
/// # Safety
/// `out_sup` and `out_l1` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_green_kernel_norms(
    lambda_2pi: f64,
    out_sup: *mut f64,
    out_l1: *mut f64,
) -> OrbitlabStatus {
    guard(
        || {
            if out_sup.is_null() || out_l1.is_null() {
                set_error("out pointer is NULL");
                return OrbitlabStatus::InvalidArgument;
            }
            let grid = Grid::spectral(64);
            match GreenKernel::new(&grid, lambda_2pi * TWO_PI * TWO_PI) {
                Ok(k) => {
                    unsafe {
                        *out_sup = k.sup_norm_2pi_closed();
                        *out_l1 = k.l1_norm_2pi_closed();
                    }
                    OrbitlabStatus::Ok
                }
                Err(e) => record(&e),
            }
        },
        OrbitlabStatus::Panic,
    )
}

/// Run a full pipeline from a config file (same format as the CLI). Returns
/// Ok when the run succeeds and every claim (if any) passes.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_run_config(path: *const c_char) -> OrbitlabStatus {
    guard(
        || {
            if path.is_null() {
                set_error("config path is NULL");
                return OrbitlabStatus::InvalidArgument;
            }
            let path = match unsafe { CStr::from_ptr(path) }.to_str() {
                Ok(s) => s,
                Err(_) => {
                    set_error("config path is not valid UTF-8");
                    return OrbitlabStatus::InvalidArgument;
                }
            };
            let cfg = match RunConfig::from_file(std::path::Path::new(path)) {
                Ok(c) => c,
                Err(e) => return record(&e),
            };
            match run(&cfg) {
                Ok(outcome) => {
                    if outcome.all_passed() {
                        OrbitlabStatus::Ok
                    } else {
                        set_error("one or more claims failed");
                        OrbitlabStatus::ClaimFailed
                    }
                }
                Err(e) => record(&e),
            }
        },
        OrbitlabStatus::Panic,
    )
}
