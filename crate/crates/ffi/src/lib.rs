//! C interface to the coopstream simulator.
//!
//! Every fallible function returns a [`CsStatus`]; on failure the message
//! is available from [`cs_last_error`] until the next call on the same
//! thread. Handles are opaque and must be released with [`cs_sim_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use coopstream::config::RunConfig;
use coopstream::metrics::oracle_best_arm;
use coopstream::sim::{self, RunOutput, SimOptions, Simulation};
use coopstream::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Io = 4,
    /// The call does not fit the handle's state (e.g. a summary before the run finished).
    BadState = 5,
    OutOfRange = 6,
    Runtime = 7,
    Panic = 8,
}

/// Per-learner aggregates. Fields that are unknown for the run are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CsSummary {
    pub slots: u64,
    pub error_pct: f64,
    pub training_pct: f64,
    pub exploration_pct: f64,
    pub exploitation_pct: f64,
    pub cum_exp_regret: f64,
    pub regret_slope: f64,
    pub aborted: u64,
}

enum Stage {
    Running(Box<Simulation>),
    Done(Box<RunOutput>),
    Empty,
}

/// Opaque simulation handle.
pub struct CsSimulation {
    config: RunConfig,
    stage: Stage,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> CsStatus {
    match err {
        Error::Config { .. } | Error::Json(_) => CsStatus::InvalidConfig,
        Error::Io(_) | Error::Csv(_) | Error::MissingDataset(_) | Error::MalformedRow { .. } => {
            CsStatus::Io
        }
        _ => CsStatus::Runtime,
    }
}

fn fail(err: Error) -> CsStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs `f`, turning a panic into [`CsStatus::Panic`].
fn guard(f: impl FnOnce() -> CsStatus) -> CsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            CsStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, CsStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(CsStatus::NullPointer);
    }
    // SAFETY: caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        CsStatus::InvalidUtf8
    })
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a JSON configuration and prepares a run with `seed`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_new(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut CsSimulation,
) -> CsStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output handle");
            return CsStatus::NullPointer;
        }
        // SAFETY: forwarded caller contract.
        let text = match unsafe { read_str(config_json) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = match RunConfig::from_json(text) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let sim = match Simulation::new(&config, seed, SimOptions::default()) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let handle = Box::new(CsSimulation {
            config,
            stage: Stage::Running(Box::new(sim)),
        });
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(handle) };
        CsStatus::Ok
    })
}

/// Executes one slot. `*done` is set to 1 once the horizon is reached, in
/// which case no slot was executed and the run is finalized.
///
/// # Safety
/// `sim` must come from [`cs_sim_new`]; `done` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_step(sim: *mut CsSimulation, done: *mut u8) -> CsStatus {
    guard(|| {
        // SAFETY: caller passes a live handle.
        let Some(h) = (unsafe { sim.as_mut() }) else {
            set_error("null simulation handle");
            return CsStatus::NullPointer;
        };
        let finished = match &mut h.stage {
            Stage::Running(s) => match s.step() {
                Ok(progressed) => !progressed,
                Err(e) => return fail(e),
            },
            _ => true,
        };
        if finished {
            finalize(h);
        }
        if !done.is_null() {
            // SAFETY: non-null output pointer from the caller.
            unsafe { *done = u8::from(finished) };
        }
        CsStatus::Ok
    })
}

fn finalize(h: &mut CsSimulation) {
    if let Stage::Running(s) = std::mem::replace(&mut h.stage, Stage::Empty) {
        h.stage = Stage::Done(Box::new(s.finish()));
    }
}

/// Runs every remaining slot.
///
/// # Safety
/// `sim` must come from [`cs_sim_new`].
#[no_mangle]
pub unsafe extern "C" fn cs_sim_run(sim: *mut CsSimulation) -> CsStatus {
    guard(|| {
        // SAFETY: caller passes a live handle.
        let Some(h) = (unsafe { sim.as_mut() }) else {
            set_error("null simulation handle");
            return CsStatus::NullPointer;
        };
        if let Stage::Running(s) = &mut h.stage {
            loop {
                match s.step() {
                    Ok(true) => {}
                    Ok(false) => break,
                    Err(e) => return fail(e),
                }
            }
        }
        finalize(h);
        CsStatus::Ok
    })
}

fn finished<'a>(sim: *const CsSimulation) -> Result<&'a CsSimulation, CsStatus> {
    // SAFETY: callers of the public functions pass a live handle; the
    // reference does not outlive the call.
    let Some(h) = (unsafe { sim.as_ref() }) else {
        set_error("null simulation handle");
        return Err(CsStatus::NullPointer);
    };
    if !matches!(h.stage, Stage::Done(_)) {
        set_error("the run has not finished");
        return Err(CsStatus::BadState);
    }
    Ok(h)
}

/// Number of learners in the run.
///
/// # Safety
/// `sim` must come from [`cs_sim_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_learner_count(sim: *const CsSimulation, out: *mut usize) -> CsStatus {
    guard(|| {
        // SAFETY: caller passes a live handle.
        let (Some(h), false) = (unsafe { sim.as_ref() }, out.is_null()) else {
            set_error("null argument");
            return CsStatus::NullPointer;
        };
        // SAFETY: checked non-null.
        unsafe { *out = h.config.learners.len() };
        CsStatus::Ok
    })
}

/// Summary of `learner` once the run has finished.
///
/// # Safety
/// `sim` must come from [`cs_sim_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_summary(
    sim: *const CsSimulation,
    learner: usize,
    out: *mut CsSummary,
) -> CsStatus {
    guard(|| {
        let h = match finished(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if out.is_null() {
            set_error("null summary pointer");
            return CsStatus::NullPointer;
        }
        let Stage::Done(run) = &h.stage else {
            return CsStatus::BadState;
        };
        let Some(s) = run.summaries.get(learner) else {
            set_error(format!("no learner {learner}"));
            return CsStatus::OutOfRange;
        };
        let summary = CsSummary {
            slots: s.slots,
            error_pct: s.error_pct,
            training_pct: s.training_pct,
            exploration_pct: s.exploration_pct,
            exploitation_pct: s.exploitation_pct,
            cum_exp_regret: s.cum_exp_regret.unwrap_or(f64::NAN),
            regret_slope: s.regret_slope.unwrap_or(f64::NAN),
            aborted: s.aborted,
        };
        // SAFETY: checked non-null.
        unsafe { *out = summary };
        CsStatus::Ok
    })
}

/// Writes metrics.csv, summary.csv and manifest.json into `dir`.
///
/// # Safety
/// `sim` must come from [`cs_sim_new`]; `dir` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_write_outputs(sim: *const CsSimulation, dir: *const c_char) -> CsStatus {
    guard(|| {
        let h = match finished(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        // SAFETY: forwarded caller contract.
        let dir = match unsafe { read_str(dir) } {
            Ok(d) => d,
            Err(s) => return s,
        };
        let Stage::Done(run) = &h.stage else {
            return CsStatus::BadState;
        };
        match sim::write_outputs(Path::new(dir), &h.config, run) {
            Ok(()) => CsStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `sim` must come from [`cs_sim_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_sim_free(sim: *mut CsSimulation) {
    if !sim.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Best arm by `accuracy - cost` over `n` arms; ties go to the lowest index.
///
/// # Safety
/// `accuracies` and `costs` must point to `n` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn cs_oracle_best_arm(
    accuracies: *const f64,
    costs: *const f64,
    n: usize,
    arm: *mut usize,
    net_value: *mut f64,
) -> CsStatus {
    guard(|| {
        if accuracies.is_null() || costs.is_null() || arm.is_null() || net_value.is_null() {
            set_error("null argument");
            return CsStatus::NullPointer;
        }
        // SAFETY: caller provides pointer/length pairs.
        let (acc, cost) = unsafe {
            (
                std::slice::from_raw_parts(accuracies, n),
                std::slice::from_raw_parts(costs, n),
            )
        };
        match oracle_best_arm(acc, cost) {
            Ok((k, v)) => {
                // SAFETY: checked non-null.
                unsafe {
                    *arm = k;
                    *net_value = v;
                }
                CsStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                CsStatus::OutOfRange
            }
        }
    })
}
