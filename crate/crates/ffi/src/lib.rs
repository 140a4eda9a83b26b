//! C ABI over the simulator.
//!
//! Every fallible entry point returns an [`LsStatus`]. On failure a message
//! is kept per thread and can be read with [`ls_last_error`]. Scenario
//! reports are opaque heap handles released with [`ls_report_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use leashsim::adversary::{run_hard_fork_scenario, run_scenario, ScenarioError};
use leashsim::hash::{Digest, ForkId};
use leashsim::leash::{gateway_decode, gateway_encode, LeashParams, GATEWAY_PREFIX_LEN};
use leashsim::scenario::{bundled, bundled_names, Scenario, ScenarioKind};
use leashsim::schedule::{count_closed_form, small, Shape};
use leashsim::state::AccountId;
use primitive_types::U256;

/// Largest `k` accepted by [`ls_schedule_count`].
pub const LS_SCHEDULE_K_MAX: u32 = 20;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Scenario text or fixture name rejected.
    Config = 3,
    /// The scenario ran but its expectations or runner checks failed. A
    /// report is still returned when the run itself completed.
    Assertion = 4,
    /// Gateway calldata could not be encoded or decoded.
    Encoding = 5,
    TooLarge = 6,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsShape {
    SingleEoa = 0,
    IndependentEoas = 1,
}

/// Leash parameters. 256-bit words are big-endian.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LsLeash {
    pub anchor_height: u64,
    pub anchor_hash: [u8; 32],
    pub length: [u8; 32],
    pub fork_id: [u8; 32],
}

impl From<&LsLeash> for LeashParams {
    fn from(l: &LsLeash) -> Self {
        LeashParams {
            anchor_height: l.anchor_height,
            anchor_hash: Digest(l.anchor_hash),
            length: U256::from_big_endian(&l.length),
            fork_id: ForkId(Digest(l.fork_id)),
        }
    }
}

impl From<&LeashParams> for LsLeash {
    fn from(p: &LeashParams) -> Self {
        let mut length = [0u8; 32];
        p.length.to_big_endian(&mut length);
        LsLeash {
            anchor_height: p.anchor_height,
            anchor_hash: p.anchor_hash.0,
            length,
            fork_id: p.fork_id.0 .0,
        }
    }
}

/// Opaque scenario report.
pub struct LsReport {
    text: CString,
    failures: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: LsStatus, msg: impl Into<String>) -> LsStatus {
    set_error(msg);
    status
}

/// Runs `f`, mapping a panic to `Internal`.
fn guard(f: impl FnOnce() -> LsStatus) -> LsStatus {
    set_error("");
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(LsStatus::Internal, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, LsStatus> {
    if p.is_null() {
        return Err(fail(LsStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LsStatus::InvalidUtf8, "argument is not UTF-8"))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize) -> Result<&'a [u8], LsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(
            LsStatus::NullPointer,
            "null buffer with nonzero length",
        ));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn cstring(s: &str) -> CString {
    CString::new(s.replace('\0', " ")).unwrap_or_default()
}

fn run_text(text: &str, out: *mut *mut LsReport) -> LsStatus {
    let scenario = match Scenario::parse(text) {
        Ok(s) => s,
        Err(e) => return fail(LsStatus::Config, e.to_string()),
    };
    let run = if scenario.kind == ScenarioKind::HardFork {
        run_hard_fork_scenario
    } else {
        run_scenario
    };
    let report = match run(&scenario) {
        Ok(r) => r,
        Err(ScenarioError::Config(e)) => return fail(LsStatus::Config, e.to_string()),
        Err(e) => return fail(LsStatus::Assertion, e.to_string()),
    };
    let failures = report.check(&scenario.expect);
    let handle = Box::new(LsReport {
        text: cstring(&report.to_text()),
        failures: failures.iter().map(|f| cstring(f)).collect(),
    });
    unsafe { *out = Box::into_raw(handle) };
    if failures.is_empty() {
        LsStatus::Ok
    } else {
        fail(LsStatus::Assertion, failures.join("; "))
    }
}

/// Message of the last failure on this thread, or an empty string. Valid
/// until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses and runs a scenario given as TOML text. On `Ok` or `Assertion`
/// `*out` receives a report handle; otherwise it is set to null.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_scenario_run(toml: *const c_char, out: *mut *mut LsReport) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return fail(LsStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        match str_arg(toml) {
            Ok(text) => run_text(text, out),
            Err(s) => s,
        }
    })
}

/// Runs a bundled scenario fixture by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_scenario_run_bundled(
    name: *const c_char,
    out: *mut *mut LsReport,
) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return fail(LsStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let name = match str_arg(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match bundled(name) {
            Ok(text) => run_text(text, out),
            Err(e) => fail(LsStatus::Config, e.to_string()),
        }
    })
}

/// Number of bundled fixtures, chain fixtures included.
#[no_mangle]
pub extern "C" fn ls_bundled_count() -> usize {
    bundled_names().count()
}

/// Name of bundled fixture `i`, or null when out of range. The string is
/// static.
#[no_mangle]
pub extern "C" fn ls_bundled_name(i: usize) -> *const c_char {
    thread_local! {
        static NAMES: Vec<CString> = bundled_names().map(cstring).collect();
    }
    NAMES.with(|n| n.get(i).map_or(ptr::null(), |s| s.as_ptr()))
}

/// Report text. Owned by the handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_report_text(report: *const LsReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.text.as_ptr())
}

/// Number of failed expectations recorded in the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_report_failure_count(report: *const LsReport) -> usize {
    report.as_ref().map_or(0, |r| r.failures.len())
}

/// Failed expectation `i`, or null when out of range. Owned by the handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_report_failure(report: *const LsReport, i: usize) -> *const c_char {
    report
        .as_ref()
        .and_then(|r| r.failures.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_report_free(report: *mut LsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of acceptable schedules of `k` transactions. `shape` is an
/// `LsShape` value; anything else gives `Config`. `TooLarge` when `k`
/// exceeds [`LS_SCHEDULE_K_MAX`].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_schedule_count(k: u32, shape: u32, out: *mut u64) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return fail(LsStatus::NullPointer, "null output pointer");
        }
        let shape = match shape {
            s if s == LsShape::SingleEoa as u32 => Shape::SingleEoa,
            s if s == LsShape::IndependentEoas as u32 => Shape::IndependentEoas,
            other => return fail(LsStatus::Config, format!("unknown shape {other}")),
        };
        let n = match count_closed_form(k as usize, shape, LS_SCHEDULE_K_MAX as usize) {
            Ok(n) => n,
            Err(e) => return fail(LsStatus::TooLarge, e.to_string()),
        };
        match small(&n).and_then(|n| u64::try_from(n).ok()) {
            Some(n) => {
                *out = n;
                LsStatus::Ok
            }
            None => fail(LsStatus::TooLarge, "count exceeds 64 bits"),
        }
    })
}

/// Encodes gateway calldata for `target` (32 bytes) with the leash prefix
/// followed by `inner`. Writes the encoded length to `*out_len`; when `cap`
/// is too small nothing else is written and `BufferTooSmall` is returned.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` may be null when
/// `cap` is zero.
#[no_mangle]
pub unsafe extern "C" fn ls_gateway_encode(
    leash: *const LsLeash,
    target: *const [u8; 32],
    inner: *const u8,
    inner_len: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> LsStatus {
    guard(|| {
        let (Some(leash), Some(target)) = (leash.as_ref(), target.as_ref()) else {
            return fail(LsStatus::NullPointer, "null leash or target");
        };
        if out_len.is_null() {
            return fail(LsStatus::NullPointer, "null length pointer");
        }
        let inner = match bytes_arg(inner, inner_len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let bytes =
            match gateway_encode(&leash.into(), AccountId(Digest(*target)), inner, usize::MAX) {
                Ok(b) => b,
                Err(e) => return fail(LsStatus::Encoding, e.to_string()),
            };
        *out_len = bytes.len();
        if cap < bytes.len() || out.is_null() {
            return fail(
                LsStatus::BufferTooSmall,
                format!("need {} bytes", bytes.len()),
            );
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
        LsStatus::Ok
    })
}

/// Decodes gateway calldata. The inner calldata starts at byte
/// `LS_GATEWAY_PREFIX_LEN` of the input.
///
/// # Safety
/// `data` must be valid for `len` bytes and the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ls_gateway_decode(
    data: *const u8,
    len: usize,
    leash: *mut LsLeash,
    target: *mut [u8; 32],
) -> LsStatus {
    guard(|| {
        if leash.is_null() || target.is_null() {
            return fail(LsStatus::NullPointer, "null output pointer");
        }
        let bytes = match bytes_arg(data, len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        match gateway_decode(bytes) {
            Ok(call) => {
                *leash = (&call.params).into();
                *target = call.target.0 .0;
                LsStatus::Ok
            }
            Err(e) => fail(LsStatus::Encoding, e.to_string()),
        }
    })
}

/// Length of the gateway calldata prefix.
pub const LS_GATEWAY_PREFIX_LEN: usize = 224;
const _: () = assert!(LS_GATEWAY_PREFIX_LEN == GATEWAY_PREFIX_LEN);
