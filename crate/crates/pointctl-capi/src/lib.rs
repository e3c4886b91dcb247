//! C ABI for the pointctl simulation core.
//!
//! The interface is deliberately small: name a model, pass its parameters as
//! a flat array in the canonical fitting order (query the order with
//! `pointctl_param_count` / `pointctl_param_name`), describe the task, and
//! read the simulated kinematics back out of an opaque handle. All functions
//! are safe to call from any thread; error messages are thread-local and
//! retrieved with `pointctl_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pointctl::fitting::{params_from_vector, ParameterSpace};
use pointctl::models::{simulate_model, ModelKind, SimOutput, SimTrace, SolveOptions, TaskSpec};
use pointctl::Error;

/// Result code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointctlStatus {
    PointctlOk = 0,
    /// A required pointer argument was null.
    PointctlNullPointer = 1,
    /// Model name, parameter vector, or task was rejected; see `pointctl_last_error`.
    PointctlInvalidArgument = 2,
    /// The optimal-control solve failed; see `pointctl_last_error`.
    PointctlSolverFailure = 3,
    /// The caller's buffer is shorter than the series being copied out.
    PointctlBufferTooSmall = 4,
    /// An internal invariant was violated; see `pointctl_last_error`.
    PointctlInternalPanic = 5,
}

use PointctlStatus::*;

/// Pointing task: move from `start` to a target of width `width` centered at
/// `target`, over `n_steps` steps of `h` seconds each. Distances are meters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PointctlTask {
    pub start: f64,
    pub target: f64,
    pub width: f64,
    pub h: f64,
    pub n_steps: usize,
}

/// Opaque simulation result; free with `pointctl_sim_free`.
pub struct PointctlSim {
    out: SimOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_for(err: &Error) -> PointctlStatus {
    match err {
        Error::Solver(_) => PointctlSolverFailure,
        _ => PointctlInvalidArgument,
    }
}

fn guard<F: FnOnce() -> PointctlStatus>(f: F) -> PointctlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PointctlInternalPanic
        }
    }
}

/// # Safety
/// `model` must be a valid NUL-terminated string or null.
unsafe fn parse_model(model: *const c_char) -> Result<ModelKind, PointctlStatus> {
    if model.is_null() {
        set_error("model name is null");
        return Err(PointctlNullPointer);
    }
    let name = match CStr::from_ptr(model).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("model name is not valid UTF-8");
            return Err(PointctlInvalidArgument);
        }
    };
    ModelKind::parse(name).map_err(|e| {
        set_error(&e.to_string());
        PointctlInvalidArgument
    })
}

fn copy_out(series: &[f64], buf: *mut f64, cap: usize) -> PointctlStatus {
    if buf.is_null() {
        set_error("output buffer is null");
        return PointctlNullPointer;
    }
    if cap < series.len() {
        set_error("output buffer is too small");
        return PointctlBufferTooSmall;
    }
    unsafe { std::ptr::copy_nonoverlapping(series.as_ptr(), buf, series.len()) };
    PointctlOk
}

/// Copy the most recent error message on this thread into `buf` (always
/// NUL-terminated when `cap > 0`) and return the message length in bytes,
/// excluding the terminator. Call with a null `buf` to query the length.
#[no_mangle]
pub unsafe extern "C" fn pointctl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pointctl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of parameters `model` takes in its canonical order.
///
/// # Safety
/// `model` must be NUL-terminated; `count` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pointctl_param_count(
    model: *const c_char,
    count: *mut usize,
) -> PointctlStatus {
    guard(|| {
        if count.is_null() {
            set_error("count pointer is null");
            return PointctlNullPointer;
        }
        match parse_model(model) {
            Ok(kind) => {
                *count = ParameterSpace::for_model(kind, 1).dim();
                PointctlOk
            }
            Err(status) => status,
        }
    })
}

/// Name of parameter `index` of `model` in the canonical order, copied into
/// `buf` NUL-terminated.
///
/// # Safety
/// `model` must be NUL-terminated; `buf` must hold at least `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn pointctl_param_name(
    model: *const c_char,
    index: usize,
    buf: *mut c_char,
    cap: usize,
) -> PointctlStatus {
    guard(|| {
        let kind = match parse_model(model) {
            Ok(k) => k,
            Err(status) => return status,
        };
        let names = ParameterSpace::for_model(kind, 1).names();
        let Some(name) = names.get(index) else {
            set_error(&format!(
                "parameter index {index} out of range for {} ({} parameters)",
                kind.name(),
                names.len()
            ));
            return PointctlInvalidArgument;
        };
        if buf.is_null() {
            set_error("name buffer is null");
            return PointctlNullPointer;
        }
        if cap < name.len() + 1 {
            set_error("name buffer is too small");
            return PointctlBufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(name.as_ptr().cast::<c_char>(), buf, name.len());
        *buf.add(name.len()) = 0;
        PointctlOk
    })
}

/// Simulate `model` with `params` (length `n_params`, canonical order) on
/// `task`, storing an owned handle in `*sim`.
///
/// # Safety
/// `params` must point to `n_params` doubles; `task` and `sim` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pointctl_simulate(
    model: *const c_char,
    params: *const f64,
    n_params: usize,
    task: *const PointctlTask,
    sim: *mut *mut PointctlSim,
) -> PointctlStatus {
    guard(|| {
        if sim.is_null() || task.is_null() || (params.is_null() && n_params > 0) {
            set_error("task, params, or output handle is null");
            return PointctlNullPointer;
        }
        let kind = match parse_model(model) {
            Ok(k) => k,
            Err(status) => return status,
        };
        let x = if n_params == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(params, n_params)
        };
        let t = &*task;
        let mut spec = TaskSpec::new(t.start, t.target, t.width, t.n_steps);
        spec.h = t.h;
        let result = params_from_vector(kind, x)
            .and_then(|p| simulate_model(&p, &spec, &SolveOptions::default()));
        match result {
            Ok(out) => {
                *sim = Box::into_raw(Box::new(PointctlSim { out }));
                PointctlOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Number of samples per kinematic series (steps + 1); 0 for a null handle.
#[no_mangle]
pub extern "C" fn pointctl_sim_len(sim: *const PointctlSim) -> usize {
    if sim.is_null() {
        return 0;
    }
    unsafe { &*sim }.out.trace.pos.len()
}

/// Step duration in seconds; 0 for a null handle.
#[no_mangle]
pub extern "C" fn pointctl_sim_step_seconds(sim: *const PointctlSim) -> f64 {
    if sim.is_null() {
        return 0.0;
    }
    unsafe { &*sim }.out.trace.h
}

// The three kinematic accessors are spelled out rather than macro-generated
// so the header generator, which does not expand macros, emits their
// prototypes.
unsafe fn copy_trace_series(
    sim: *const PointctlSim,
    pick: fn(&SimTrace) -> &[f64],
    buf: *mut f64,
    cap: usize,
) -> PointctlStatus {
    guard(|| {
        if sim.is_null() {
            set_error("simulation handle is null");
            return PointctlNullPointer;
        }
        copy_out(pick(&(*sim).out.trace), buf, cap)
    })
}

/// Mean position series in meters.
/// Copies `pointctl_sim_len` doubles.
///
/// # Safety
/// `buf` must hold at least `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pointctl_sim_positions(
    sim: *const PointctlSim,
    buf: *mut f64,
    cap: usize,
) -> PointctlStatus {
    copy_trace_series(sim, |t| &t.pos, buf, cap)
}

/// Mean velocity series in m/s.
/// Copies `pointctl_sim_len` doubles.
///
/// # Safety
/// `buf` must hold at least `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pointctl_sim_velocities(
    sim: *const PointctlSim,
    buf: *mut f64,
    cap: usize,
) -> PointctlStatus {
    copy_trace_series(sim, |t| &t.vel, buf, cap)
}

/// Mean acceleration series in m/s^2.
/// Copies `pointctl_sim_len` doubles.
///
/// # Safety
/// `buf` must hold at least `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pointctl_sim_accelerations(
    sim: *const PointctlSim,
    buf: *mut f64,
    cap: usize,
) -> PointctlStatus {
    copy_trace_series(sim, |t| &t.acc, buf, cap)
}

/// Control series (one entry per step, `pointctl_sim_len` minus 1 values).
///
/// # Safety
/// `buf` must hold at least `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pointctl_sim_controls(
    sim: *const PointctlSim,
    buf: *mut f64,
    cap: usize,
) -> PointctlStatus {
    guard(|| {
        if sim.is_null() {
            set_error("simulation handle is null");
            return PointctlNullPointer;
        }
        copy_out(&(*sim).out.trace.control, buf, cap)
    })
}

/// 1 when the model carries a state distribution (lqg, elqg), else 0.
#[no_mangle]
pub extern "C" fn pointctl_sim_has_distribution(sim: *const PointctlSim) -> c_int {
    if sim.is_null() {
        return 0;
    }
    unsafe { &*sim }.out.distribution.is_some() as c_int
}

/// Per-sample position standard deviation in meters; fails with
/// `POINTCTL_INVALID_ARGUMENT` for deterministic models.
///
/// # Safety
/// `buf` must hold at least `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pointctl_sim_position_stddev(
    sim: *const PointctlSim,
    buf: *mut f64,
    cap: usize,
) -> PointctlStatus {
    guard(|| {
        if sim.is_null() {
            set_error("simulation handle is null");
            return PointctlNullPointer;
        }
        let Some(dist) = &(*sim).out.distribution else {
            set_error("model is deterministic: no state distribution to read");
            return PointctlInvalidArgument;
        };
        let stddev: Vec<f64> = dist
            .steps
            .iter()
            .map(|s| s.pos_vel_marginal().1[(0, 0)].max(0.0).sqrt())
            .collect();
        copy_out(&stddev, buf, cap)
    })
}

/// Release a handle returned by `pointctl_simulate`; null is a no-op.
///
/// # Safety
/// `sim` must be a handle from `pointctl_simulate`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pointctl_sim_free(sim: *mut PointctlSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
