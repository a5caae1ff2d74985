//! C ABI over the smpkit toolkit: build a semi-Markov model from JSON,
//! sample paths, solve the forward equations, and query the resulting law
//! through opaque handles.
//!
//! Conventions: every fallible call returns an [`smp_status`] and writes its
//! result through an out pointer only on `SMP_OK`; each handle is released by
//! its matching `*_free` function exactly once; [`smp_last_error_message`]
//! describes the most recent failure on the calling thread. Panics never
//! unwind across the boundary — they surface as `SMP_ERR_PANIC`.
#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};

use smpkit::config::ModelSpec;
use smpkit::model::ModelError;
use smpkit::simulate::{path_rng, simulate_path};
use smpkit::solver::solve_row;
use smpkit::{HazardKernel, IntensityModel, RowSequence, SolverError, StartState, Trajectory};

/// Result of a toolkit call. `SMP_OK` is zero; everything else is a failure
/// whose description is readable via `smp_last_error_message`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum smp_status {
    /// The call succeeded and any out parameters were written.
    SMP_OK = 0,
    /// A required pointer argument was null.
    SMP_ERR_NULL_ARGUMENT = 1,
    /// A string argument was not valid UTF-8.
    SMP_ERR_UTF8 = 2,
    /// The model JSON did not parse against the schema.
    SMP_ERR_PARSE = 3,
    /// The model description was rejected (unknown state, negative rate, …).
    SMP_ERR_MODEL = 4,
    /// Path sampling failed (explosive intensities, bad window, …).
    SMP_ERR_SIMULATION = 5,
    /// The forward solver rejected its inputs or lost conservation.
    SMP_ERR_SOLVER = 6,
    /// An index, time, or duration was outside the valid range.
    SMP_ERR_OUT_OF_RANGE = 7,
    /// An internal invariant failed; the library caught a panic.
    SMP_ERR_PANIC = 8,
}

/// A validated model: named states and the intensity fields between them.
pub struct smp_model {
    inner: IntensityModel,
    c_names: Vec<CString>,
}

/// One sampled path: the initial condition plus its jump sequence.
pub struct smp_trajectory {
    inner: Trajectory,
}

/// One solved transition law p_{i·}(s, t, u, ·) on a grid of times t.
pub struct smp_solution {
    inner: RowSequence,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn fail(status: smp_status, err: impl Display) -> smp_status {
    set_last_error(&err.to_string());
    status
}

fn null_arg(name: &str) -> smp_status {
    fail(
        smp_status::SMP_ERR_NULL_ARGUMENT,
        format_args!("`{name}` must not be null"),
    )
}

fn model_error(e: ModelError) -> smp_status {
    let status = match &e {
        ModelError::StateOutOfRange { .. } | ModelError::UnknownState(_) => {
            smp_status::SMP_ERR_OUT_OF_RANGE
        }
        _ => smp_status::SMP_ERR_MODEL,
    };
    fail(status, e)
}

fn solver_error(e: SolverError) -> smp_status {
    let status = match &e {
        SolverError::StateOutOfRange { .. } | SolverError::OffGrid { .. } => {
            smp_status::SMP_ERR_OUT_OF_RANGE
        }
        SolverError::Model(ModelError::StateOutOfRange { .. }) => smp_status::SMP_ERR_OUT_OF_RANGE,
        _ => smp_status::SMP_ERR_SOLVER,
    };
    fail(status, e)
}

/// Run `f`, converting any panic into `SMP_ERR_PANIC` instead of unwinding
/// into the caller.
fn guard<F: FnOnce() -> smp_status>(f: F) -> smp_status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .copied()
                .or_else(|| payload.downcast_ref::<String>().map(String::as_str))
                .unwrap_or("opaque panic payload");
            fail(
                smp_status::SMP_ERR_PANIC,
                format_args!("internal panic: {msg}"),
            )
        }
    }
}

/// The symbolic name of a status code (passed as its integer value), as a
/// static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smp_status_name(status: c_int) -> *const c_char {
    let name: &'static CStr = match status {
        0 => c"SMP_OK",
        1 => c"SMP_ERR_NULL_ARGUMENT",
        2 => c"SMP_ERR_UTF8",
        3 => c"SMP_ERR_PARSE",
        4 => c"SMP_ERR_MODEL",
        5 => c"SMP_ERR_SIMULATION",
        6 => c"SMP_ERR_SOLVER",
        7 => c"SMP_ERR_OUT_OF_RANGE",
        8 => c"SMP_ERR_PANIC",
        _ => c"SMP_UNKNOWN_STATUS",
    };
    name.as_ptr()
}

/// Description of the most recent failure on the calling thread, or the
/// empty string if none. The pointer stays valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn smp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Build a model from its JSON description — the same schema as the `model`
/// section of a CLI config: `{"states": [...], "intensities": [{"from",
/// "to", "field"}, ...]}`.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer. On `SMP_OK` the caller owns the new handle and
/// must release it with [`smp_model_free`].
#[no_mangle]
pub unsafe extern "C" fn smp_model_from_json(
    json: *const c_char,
    out: *mut *mut smp_model,
) -> smp_status {
    if json.is_null() {
        return null_arg("json");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let json = unsafe { CStr::from_ptr(json) };
    guard(|| {
        let Ok(text) = json.to_str() else {
            return fail(smp_status::SMP_ERR_UTF8, "model JSON is not valid UTF-8");
        };
        let spec: ModelSpec = match serde_json::from_str(text) {
            Ok(spec) => spec,
            Err(e) => return fail(smp_status::SMP_ERR_PARSE, e),
        };
        let inner = match spec.build() {
            Ok(model) => model,
            Err(e) => return fail(smp_status::SMP_ERR_MODEL, e),
        };
        let c_names = inner
            .states()
            .names()
            .iter()
            .map(|n| CString::new(n.replace('\0', " ")).expect("interior NULs were removed"))
            .collect();
        let handle = Box::into_raw(Box::new(smp_model { inner, c_names }));
        unsafe { out.write(handle) };
        smp_status::SMP_OK
    })
}

/// Release a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a pointer from [`smp_model_from_json`] that has
/// not been freed yet; no other handle may still borrow it.
#[no_mangle]
pub unsafe extern "C" fn smp_model_free(model: *mut smp_model) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of states in the model; 0 if `model` is null.
///
/// # Safety
/// `model` must be null or a live handle from [`smp_model_from_json`].
#[no_mangle]
pub unsafe extern "C" fn smp_model_state_count(model: *const smp_model) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.n_states())
}

/// Name of state `state`, valid for as long as the model handle lives.
///
/// # Safety
/// `model` must be a live handle and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn smp_model_state_name(
    model: *const smp_model,
    state: usize,
    out: *mut *const c_char,
) -> smp_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("model");
    };
    if out.is_null() {
        return null_arg("out");
    }
    guard(|| match model.c_names.get(state) {
        Some(name) => {
            unsafe { out.write(name.as_ptr()) };
            smp_status::SMP_OK
        }
        None => fail(
            smp_status::SMP_ERR_OUT_OF_RANGE,
            format_args!(
                "state {state} out of range for a model with {} states",
                model.c_names.len()
            ),
        ),
    })
}

/// Index of the state called `name`.
///
/// # Safety
/// `model` must be a live handle, `name` a NUL-terminated string, and `out`
/// writable storage for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn smp_model_state_index(
    model: *const smp_model,
    name: *const c_char,
    out: *mut usize,
) -> smp_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("model");
    };
    if name.is_null() {
        return null_arg("name");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let name = unsafe { CStr::from_ptr(name) };
    guard(|| {
        let Ok(text) = name.to_str() else {
            return fail(smp_status::SMP_ERR_UTF8, "state name is not valid UTF-8");
        };
        match model.inner.states().index_of(text) {
            Some(index) => {
                unsafe { out.write(index) };
                smp_status::SMP_OK
            }
            None => model_error(ModelError::UnknownState(text.to_owned())),
        }
    })
}

/// Intensity q_{from→to}(t, u): the jump rate from `from` to `to` at
/// calendar time `t` and duration `u`.
///
/// # Safety
/// `model` must be a live handle and `out` writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn smp_model_rate(
    model: *const smp_model,
    from: usize,
    to: usize,
    t: f64,
    u: f64,
    out: *mut f64,
) -> smp_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("model");
    };
    if out.is_null() {
        return null_arg("out");
    }
    guard(|| match model.inner.rate(from, to, t, u) {
        Ok(rate) => {
            unsafe { out.write(rate) };
            smp_status::SMP_OK
        }
        Err(e) => model_error(e),
    })
}

/// Total exit rate q_from(t, u) = Σ_{j≠from} q_{from→j}(t, u).
///
/// # Safety
/// `model` must be a live handle and `out` writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn smp_model_total_rate(
    model: *const smp_model,
    from: usize,
    t: f64,
    u: f64,
    out: *mut f64,
) -> smp_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("model");
    };
    if out.is_null() {
        return null_arg("out");
    }
    guard(|| match model.inner.total_rate(from, t, u) {
        Ok(rate) => {
            unsafe { out.write(rate) };
            smp_status::SMP_OK
        }
        Err(e) => model_error(e),
    })
}

/// Sample one path from `(initial_state, start_time, initial_duration)` to
/// `horizon`. The pair `(seed, path_index)` picks an independent RNG
/// substream, so a batch is reproduced path by path.
///
/// # Safety
/// `model` must be a live handle and `out` writable storage for one
/// pointer. On `SMP_OK` the caller owns the trajectory and must release it
/// with [`smp_trajectory_free`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn smp_simulate(
    model: *const smp_model,
    initial_state: usize,
    start_time: f64,
    initial_duration: f64,
    horizon: f64,
    max_jumps: usize,
    seed: u64,
    path_index: u64,
    out: *mut *mut smp_trajectory,
) -> smp_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("model");
    };
    if out.is_null() {
        return null_arg("out");
    }
    guard(|| {
        let n = model.inner.n_states();
        if initial_state >= n {
            return model_error(ModelError::StateOutOfRange {
                index: initial_state,
                n_states: n,
            });
        }
        if !start_time.is_finite() || !horizon.is_finite() || horizon < start_time {
            return fail(
                smp_status::SMP_ERR_SIMULATION,
                format_args!("bad window [{start_time}, {horizon}]"),
            );
        }
        if !initial_duration.is_finite() || initial_duration < 0.0 {
            return fail(
                smp_status::SMP_ERR_SIMULATION,
                format_args!("initial duration {initial_duration} must be finite and ≥ 0"),
            );
        }
        let kernel = HazardKernel::new(&model.inner);
        let mut rng = path_rng(seed, path_index);
        match simulate_path(
            &kernel,
            initial_state,
            start_time,
            initial_duration,
            horizon,
            max_jumps,
            &mut rng,
        ) {
            Ok(inner) => {
                let handle = Box::into_raw(Box::new(smp_trajectory { inner }));
                unsafe { out.write(handle) };
                smp_status::SMP_OK
            }
            Err(e) => fail(smp_status::SMP_ERR_SIMULATION, e),
        }
    })
}

/// Release a trajectory handle. Null is ignored.
///
/// # Safety
/// `trajectory` must be null or an unfreed pointer from [`smp_simulate`].
#[no_mangle]
pub unsafe extern "C" fn smp_trajectory_free(trajectory: *mut smp_trajectory) {
    if !trajectory.is_null() {
        drop(unsafe { Box::from_raw(trajectory) });
    }
}

/// Number of jumps on the path; 0 if `trajectory` is null.
///
/// # Safety
/// `trajectory` must be null or a live handle from [`smp_simulate`].
#[no_mangle]
pub unsafe extern "C" fn smp_trajectory_jump_count(trajectory: *const smp_trajectory) -> usize {
    unsafe { trajectory.as_ref() }.map_or(0, |t| t.inner.jump_count())
}

/// The `index`-th jump (0-based, in time order): when it happened and which
/// state it entered.
///
/// # Safety
/// `trajectory` must be a live handle; `time_out` and `state_out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn smp_trajectory_jump(
    trajectory: *const smp_trajectory,
    index: usize,
    time_out: *mut f64,
    state_out: *mut usize,
) -> smp_status {
    let Some(trajectory) = (unsafe { trajectory.as_ref() }) else {
        return null_arg("trajectory");
    };
    if time_out.is_null() {
        return null_arg("time_out");
    }
    if state_out.is_null() {
        return null_arg("state_out");
    }
    guard(|| match trajectory.inner.events.get(index) {
        Some(event) => {
            unsafe {
                time_out.write(event.time);
                state_out.write(event.state);
            }
            smp_status::SMP_OK
        }
        None => fail(
            smp_status::SMP_ERR_OUT_OF_RANGE,
            format_args!(
                "jump {index} out of range for a path with {} jumps",
                trajectory.inner.jump_count()
            ),
        ),
    })
}

/// State and duration of the path at `time`, which must lie inside the
/// simulated window. The path is càdlàg: at a jump time the entered state
/// applies with duration 0.
///
/// # Safety
/// `trajectory` must be a live handle; `state_out` and `duration_out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn smp_trajectory_state_at(
    trajectory: *const smp_trajectory,
    time: f64,
    state_out: *mut usize,
    duration_out: *mut f64,
) -> smp_status {
    let Some(trajectory) = (unsafe { trajectory.as_ref() }) else {
        return null_arg("trajectory");
    };
    if state_out.is_null() {
        return null_arg("state_out");
    }
    if duration_out.is_null() {
        return null_arg("duration_out");
    }
    guard(|| {
        let path = &trajectory.inner;
        if !(time >= path.start_time && time <= path.horizon) {
            return fail(
                smp_status::SMP_ERR_OUT_OF_RANGE,
                format_args!(
                    "time {time} outside the simulated window [{}, {}]",
                    path.start_time, path.horizon
                ),
            );
        }
        let (state, duration) = path.state_at(time);
        unsafe {
            state_out.write(state);
            duration_out.write(duration);
        }
        smp_status::SMP_OK
    })
}

/// Solve the forward equations for the transition law row of
/// `(initial_state, start_time, initial_duration)` up to `end_time` on a
/// duration/time grid of width `delta` (which must divide the interval).
///
/// # Safety
/// `model` must be a live handle and `out` writable storage for one
/// pointer. On `SMP_OK` the caller owns the solution and must release it
/// with [`smp_solution_free`].
#[no_mangle]
pub unsafe extern "C" fn smp_solve(
    model: *const smp_model,
    initial_state: usize,
    start_time: f64,
    initial_duration: f64,
    end_time: f64,
    delta: f64,
    out: *mut *mut smp_solution,
) -> smp_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("model");
    };
    if out.is_null() {
        return null_arg("out");
    }
    guard(|| {
        let start = StartState {
            state: initial_state,
            time: start_time,
            duration: initial_duration,
        };
        match solve_row(&model.inner, start, end_time, delta) {
            Ok(inner) => {
                let handle = Box::into_raw(Box::new(smp_solution { inner }));
                unsafe { out.write(handle) };
                smp_status::SMP_OK
            }
            Err(e) => solver_error(e),
        }
    })
}

/// Release a solution handle. Null is ignored.
///
/// # Safety
/// `solution` must be null or an unfreed pointer from [`smp_solve`].
#[no_mangle]
pub unsafe extern "C" fn smp_solution_free(solution: *mut smp_solution) {
    if !solution.is_null() {
        drop(unsafe { Box::from_raw(solution) });
    }
}

/// Last grid time the solution covers; NaN if `solution` is null.
///
/// # Safety
/// `solution` must be null or a live handle from [`smp_solve`].
#[no_mangle]
pub unsafe extern "C" fn smp_solution_end_time(solution: *const smp_solution) -> f64 {
    unsafe { solution.as_ref() }.map_or(f64::NAN, |s| s.inner.end_time())
}

/// P(state at `time` is `state`), with `time` on the solution's grid.
///
/// # Safety
/// `solution` must be a live handle and `out` writable storage for one
/// double.
#[no_mangle]
pub unsafe extern "C" fn smp_solution_marginal(
    solution: *const smp_solution,
    time: f64,
    state: usize,
    out: *mut f64,
) -> smp_status {
    let Some(solution) = (unsafe { solution.as_ref() }) else {
        return null_arg("solution");
    };
    if out.is_null() {
        return null_arg("out");
    }
    guard(|| match solution.inner.marginal(time, state) {
        Ok(mass) => {
            unsafe { out.write(mass) };
            smp_status::SMP_OK
        }
        Err(e) => solver_error(e),
    })
}

/// P(state at `time` is `state` and its duration is ≤ `d`), with `time` on
/// the solution's grid.
///
/// # Safety
/// `solution` must be a live handle and `out` writable storage for one
/// double.
#[no_mangle]
pub unsafe extern "C" fn smp_solution_cdf(
    solution: *const smp_solution,
    time: f64,
    state: usize,
    d: f64,
    out: *mut f64,
) -> smp_status {
    let Some(solution) = (unsafe { solution.as_ref() }) else {
        return null_arg("solution");
    };
    if out.is_null() {
        return null_arg("out");
    }
    guard(|| match solution.inner.cdf(time, state, d) {
        Ok(mass) => {
            unsafe { out.write(mass) };
            smp_status::SMP_OK
        }
        Err(e) => solver_error(e),
    })
}
