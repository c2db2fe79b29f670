//! C ABI over the simulator. Handles are opaque and owned by the caller
//! until passed to the matching `_free`. Every call returns a
//! [`LosnavStatus`]; on failure `losnav_last_error` describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use losnav::geometry::{wrap_angle, Vec2};
use losnav::protocol::{decode, encode, TargetRequest, WireMessage};
use losnav::sim::{self, LegOutcome, RunResult, Scenario, ScenarioError};
use losnav::world::line_of_sight;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosnavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidScenario = 5,
    InvalidArgument = 6,
    Encode = 7,
    Decode = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosnavLegOutcome {
    Arrived = 0,
    Unreachable = 1,
    Failed = 2,
}

/// Headline numbers of a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LosnavSummary {
    pub arrived: usize,
    pub legs: usize,
    pub final_error: f64,
    pub path_length: f64,
    pub min_clearance: f64,
    /// 1 when the final pose sees the served device, 0 when it does not,
    /// -1 when the scenario has no device.
    pub los_to_device: i32,
    pub duration: f64,
    pub collided: bool,
}

/// A parsed scenario.
pub struct LosnavScenario {
    inner: Scenario,
}

/// The logs and outcome of one run.
pub struct LosnavRun {
    result: RunResult,
    summary: LosnavSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let text = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn fail(status: LosnavStatus, msg: impl std::fmt::Display) -> LosnavStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`LosnavStatus::Panic`].
fn guard(f: impl FnOnce() -> LosnavStatus) -> LosnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == LosnavStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(LosnavStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, LosnavStatus> {
    if s.is_null() {
        return Err(fail(LosnavStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(LosnavStatus::InvalidUtf8, e))
}

fn scenario_status(e: &ScenarioError) -> LosnavStatus {
    match e {
        ScenarioError::Io { .. } => LosnavStatus::Io,
        ScenarioError::Parse { .. } => LosnavStatus::Parse,
        ScenarioError::Invalid(_) => LosnavStatus::InvalidScenario,
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut text = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        text.push_str(": ");
        text.push_str(&s.to_string());
        src = s.source();
    }
    text
}

unsafe fn emit_scenario(
    parsed: Result<Scenario, ScenarioError>,
    out: *mut *mut LosnavScenario,
) -> LosnavStatus {
    match parsed {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(LosnavScenario { inner }));
            LosnavStatus::Ok
        }
        Err(e) => fail(scenario_status(&e), error_chain(&e)),
    }
}

unsafe fn emit_string(text: String, out: *mut *mut c_char) -> LosnavStatus {
    match CString::new(text) {
        Ok(c) => {
            *out = c.into_raw();
            LosnavStatus::Ok
        }
        Err(e) => fail(LosnavStatus::Encode, e),
    }
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn losnav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn losnav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses scenario text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn losnav_scenario_parse(
    text: *const c_char,
    out: *mut *mut LosnavScenario,
) -> LosnavStatus {
    guard(|| {
        if out.is_null() {
            return fail(LosnavStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        match read_str(text) {
            Ok(t) => emit_scenario(sim::parse_scenario(t), out),
            Err(s) => s,
        }
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn losnav_scenario_load(
    path: *const c_char,
    out: *mut *mut LosnavScenario,
) -> LosnavStatus {
    guard(|| {
        if out.is_null() {
            return fail(LosnavStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        match read_str(path) {
            Ok(p) => emit_scenario(sim::load_scenario(p), out),
            Err(s) => s,
        }
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scn` must come from a scenario constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn losnav_scenario_free(scn: *mut LosnavScenario) {
    if !scn.is_null() {
        drop(Box::from_raw(scn));
    }
}

/// Number of targets in the scenario, zero for null.
///
/// # Safety
/// `scn` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn losnav_scenario_target_count(scn: *const LosnavScenario) -> usize {
    scn.as_ref().map_or(0, |s| s.inner.targets.len())
}

/// Overrides the random seed.
///
/// # Safety
/// `scn` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn losnav_scenario_set_seed(
    scn: *mut LosnavScenario,
    seed: u64,
) -> LosnavStatus {
    guard(|| match scn.as_mut() {
        Some(s) => {
            s.inner.seed = seed;
            LosnavStatus::Ok
        }
        None => fail(LosnavStatus::NullPointer, "null scenario"),
    })
}

/// Whether the segment between two points is free of obstacles in the
/// scenario's world.
///
/// # Safety
/// `scn` must be a live scenario handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn losnav_line_of_sight(
    scn: *const LosnavScenario,
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    out: *mut bool,
) -> LosnavStatus {
    guard(|| {
        let (Some(s), false) = (scn.as_ref(), out.is_null()) else {
            return fail(LosnavStatus::NullPointer, "null argument");
        };
        if ![ax, ay, bx, by].iter().all(|v| v.is_finite()) {
            return fail(LosnavStatus::InvalidArgument, "coordinates must be finite");
        }
        *out = line_of_sight(Vec2::new(ax, ay), Vec2::new(bx, by), &s.inner.world);
        LosnavStatus::Ok
    })
}

/// Runs every target of the scenario in virtual time.
///
/// # Safety
/// `scn` must be a live scenario handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn losnav_run(
    scn: *const LosnavScenario,
    out: *mut *mut LosnavRun,
) -> LosnavStatus {
    guard(|| {
        if out.is_null() {
            return fail(LosnavStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let Some(s) = scn.as_ref() else {
            return fail(LosnavStatus::NullPointer, "null scenario");
        };
        let result = sim::run(&s.inner);
        let sum = result.summary(&s.inner);
        let summary = LosnavSummary {
            arrived: sum.arrived,
            legs: sum.legs,
            final_error: sum.final_error,
            path_length: sum.path_length,
            min_clearance: sum.min_clearance,
            los_to_device: sum.los_to_device.map_or(-1, i32::from),
            duration: sum.duration,
            collided: result.collided,
        };
        *out = Box::into_raw(Box::new(LosnavRun { result, summary }));
        LosnavStatus::Ok
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from `losnav_run` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn losnav_run_free(run: *mut LosnavRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Copies the run summary into `out`.
///
/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn losnav_run_summary(
    run: *const LosnavRun,
    out: *mut LosnavSummary,
) -> LosnavStatus {
    guard(|| match (run.as_ref(), out.is_null()) {
        (Some(r), false) => {
            *out = r.summary;
            LosnavStatus::Ok
        }
        _ => fail(LosnavStatus::NullPointer, "null argument"),
    })
}

/// Outcome of leg `index`. Legs after a failure are absent.
///
/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn losnav_run_leg(
    run: *const LosnavRun,
    index: usize,
    out: *mut LosnavLegOutcome,
) -> LosnavStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(LosnavStatus::NullPointer, "null argument");
        };
        match r.result.legs.get(index) {
            Some(leg) => {
                *out = match leg {
                    LegOutcome::Arrived => LosnavLegOutcome::Arrived,
                    LegOutcome::Unreachable => LosnavLegOutcome::Unreachable,
                    LegOutcome::Failed => LosnavLegOutcome::Failed,
                };
                LosnavStatus::Ok
            }
            None => fail(LosnavStatus::InvalidArgument, format!("no leg {index}")),
        }
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosnavLog {
    Trajectory = 0,
    Events = 1,
    Transitions = 2,
}

/// Renders one of the run's logs as CSV. Free the result with
/// `losnav_string_free`.
///
/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn losnav_run_csv(
    run: *const LosnavRun,
    which: LosnavLog,
    out: *mut *mut c_char,
) -> LosnavStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(LosnavStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        let log = &r.result.log;
        let csv = match which {
            LosnavLog::Trajectory => log.trajectory_csv(),
            LosnavLog::Events => log.events_csv(),
            LosnavLog::Transitions => log.transitions_csv(),
        };
        match csv {
            Ok(text) => emit_string(text, out),
            Err(e) => fail(LosnavStatus::Encode, e),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn losnav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Wraps an angle into (-pi, pi].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn losnav_wrap_angle(theta: f64, out: *mut f64) -> LosnavStatus {
    guard(|| {
        if out.is_null() {
            return fail(LosnavStatus::NullPointer, "null output pointer");
        }
        match wrap_angle(theta) {
            Ok(v) => {
                *out = v;
                LosnavStatus::Ok
            }
            Err(e) => fail(LosnavStatus::InvalidArgument, e),
        }
    })
}

/// Encodes a target request datagram into `buf`. On
/// `BufferTooSmall`, `out_len` holds the size needed.
///
/// # Safety
/// `buf` must point to `cap` writable bytes and `out_len` be valid.
#[no_mangle]
pub unsafe extern "C" fn losnav_encode_target_request(
    seq: u64,
    timestamp_ms: u64,
    x: f64,
    y: f64,
    buf: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> LosnavStatus {
    guard(|| {
        if out_len.is_null() || (buf.is_null() && cap > 0) {
            return fail(LosnavStatus::NullPointer, "null argument");
        }
        let msg = WireMessage::TargetRequest(TargetRequest {
            seq,
            timestamp_ms,
            x,
            y,
        });
        let bytes = match encode(&msg) {
            Ok(b) => b,
            Err(e) => return fail(LosnavStatus::Encode, e),
        };
        *out_len = bytes.len();
        if bytes.len() > cap {
            return fail(
                LosnavStatus::BufferTooSmall,
                format!("need {} bytes", bytes.len()),
            );
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        LosnavStatus::Ok
    })
}

/// Decodes any protocol datagram and returns its canonical encoding as a
/// string. Free the result with `losnav_string_free`.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn losnav_canonicalize(
    bytes: *const u8,
    len: usize,
    out: *mut *mut c_char,
) -> LosnavStatus {
    guard(|| {
        if out.is_null() || (bytes.is_null() && len > 0) {
            return fail(LosnavStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let data = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(bytes, len)
        };
        let msg = match decode(data) {
            Ok(m) => m,
            Err(e) => return fail(LosnavStatus::Decode, e),
        };
        match encode(&msg) {
            Ok(b) => emit_string(String::from_utf8(b).expect("encoder emits UTF-8"), out),
            Err(e) => fail(LosnavStatus::Encode, e),
        }
    })
}
