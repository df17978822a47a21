//! C ABI over `npa-core`.
//!
//! Every fallible call returns an [`NpaStatus`]; on failure the message is
//! available from [`npa_last_error_message`] on the same thread. Handles are
//! opaque and released with their `_free` function. Strings returned through
//! out-pointers are owned by the caller and released with [`npa_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use npa_core::algebra::Scenario;
use npa_core::analysis::{analyze, recheck_report, simulated_table, AnalysisError, AnalysisRequest, Source, Verdict, VerdictReport};
use npa_core::format::{ingest_table, structure_report, table_to_json};
use npa_core::hierarchy::{build_structure, MomentMatrixStructure, PinMode, PinPolicy};
use npa_core::quantum::{CorrelatorTable, QuantumError, StateKind, SuiteKind};
use npa_core::sdp::SolverConfig;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Structure = 4,
    Simulation = 5,
    Assembly = 6,
    Solve = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpaVerdict {
    Inconclusive = 0,
    Nonlocal = 1,
}

pub struct NpaStructure(MomentMatrixStructure);

pub struct NpaTable(CorrelatorTable);

pub struct NpaReport(VerdictReport);

/// Solver knobs exposed over the ABI; the rest keep their defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NpaSolverOptions {
    pub seed: u64,
    pub max_iters: usize,
    pub margin: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(NpaStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NpaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NpaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NpaStatus::Panic
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(NpaStatus::InvalidArgument, msg.into())
}

fn analysis_failure(e: AnalysisError) -> Failure {
    let status = match e {
        AnalysisError::Structure(_) => NpaStatus::Structure,
        AnalysisError::Simulation(_) => NpaStatus::Simulation,
        AnalysisError::Assembly(_) => NpaStatus::Assembly,
        AnalysisError::Solve(_) => NpaStatus::Solve,
        AnalysisError::Ingest(_) | AnalysisError::Report(_) => NpaStatus::Parse,
        AnalysisError::NoBracket { .. } | AnalysisError::InvalidTolerance(_) => NpaStatus::InvalidArgument,
    };
    Failure(status, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(NpaStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(NpaStatus::NullPointer, format!("{name} is null")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(NpaStatus::NullPointer, "out is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn emit_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(NpaStatus::NullPointer, "out is null".into()));
    }
    *out = CString::new(s).map_err(|_| invalid("string contains NUL"))?.into_raw();
    Ok(())
}

fn policy(s: &str) -> Result<PinPolicy, Failure> {
    if s == "all" {
        return Ok(PinPolicy::All);
    }
    s.strip_prefix("max-bodies:")
        .and_then(|k| k.parse().ok())
        .map(PinPolicy::MaxBodies)
        .ok_or_else(|| invalid(format!("unknown pin policy '{s}'")))
}

fn solver(options: *const NpaSolverOptions) -> SolverConfig {
    let mut config = SolverConfig::default();
    if let Some(o) = unsafe { options.as_ref() } {
        config.seed = o.seed;
        config.max_iters = o.max_iters;
        config.margin = o.margin;
    }
    config
}

/// Default solver options.
#[no_mangle]
pub extern "C" fn npa_solver_options_default() -> NpaSolverOptions {
    let d = SolverConfig::default();
    NpaSolverOptions {
        seed: d.seed,
        max_iters: d.max_iters,
        margin: d.margin,
    }
}

/// Message of the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn npa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn npa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_structure_new(
    parties: usize,
    settings: usize,
    level: usize,
    out: *mut *mut NpaStructure,
) -> NpaStatus {
    guard(|| {
        let scenario = Scenario::dichotomic(parties, settings).map_err(|e| invalid(e.to_string()))?;
        let s = build_structure(&scenario, level).map_err(|e| Failure(NpaStatus::Structure, e.to_string()))?;
        emit(out, NpaStructure(s))
    })
}

/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn npa_structure_free(s: *mut NpaStructure) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Matrix dimension, or 0 for a null handle.
///
/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn npa_structure_dim(s: *const NpaStructure) -> usize {
    s.as_ref().map_or(0, |s| s.0.dim())
}

/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn npa_structure_num_observables(s: *const NpaStructure) -> usize {
    s.as_ref().map_or(0, |s| s.0.observables().len())
}

/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn npa_structure_num_freevars(s: *const NpaStructure) -> usize {
    s.as_ref().map_or(0, |s| s.0.freevars().len())
}

/// # Safety
/// `s` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_structure_to_json(s: *const NpaStructure, out: *mut *mut c_char) -> NpaStatus {
    guard(|| {
        let s = handle(s, "structure")?;
        let json = serde_json::to_string_pretty(&structure_report(&s.0)).map_err(|e| Failure(NpaStatus::Parse, e.to_string()))?;
        emit_string(out, json)
    })
}

/// Parses and validates a correlator table document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_table_from_json(json: *const c_char, out: *mut *mut NpaTable) -> NpaStatus {
    guard(|| {
        let doc = str_arg(json, "json")?;
        let table = ingest_table(doc).map_err(|e| Failure(NpaStatus::Parse, e.to_string()))?;
        emit(out, NpaTable(table))
    })
}

/// Simulates a built-in state under a standard suite at visibility `p`.
///
/// # Safety
/// `state` and `suite` must be NUL-terminated strings; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_table_simulate(
    state: *const c_char,
    suite: *const c_char,
    visibility: f64,
    parties: usize,
    settings: usize,
    level: usize,
    out: *mut *mut NpaTable,
) -> NpaStatus {
    guard(|| {
        let state: StateKind = str_arg(state, "state")?.parse().map_err(|e: QuantumError| invalid(e.to_string()))?;
        let suite: SuiteKind = str_arg(suite, "suite")?.parse().map_err(|e: QuantumError| invalid(e.to_string()))?;
        let scenario = Scenario::dichotomic(parties, settings).map_err(|e| invalid(e.to_string()))?;
        let table = simulated_table(&state, suite, visibility, &scenario, level)
            .map_err(analysis_failure)?;
        emit(out, NpaTable(table))
    })
}

/// # Safety
/// `t` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn npa_table_free(t: *mut NpaTable) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of moments, or 0 for a null handle.
///
/// # Safety
/// `t` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn npa_table_len(t: *const NpaTable) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `t` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_table_to_json(t: *const NpaTable, out: *mut *mut c_char) -> NpaStatus {
    guard(|| {
        let t = handle(t, "table")?;
        emit_string(out, table_to_json(&t.0))
    })
}

/// Analyzes a table at hierarchy `level`. `policy` is `"all"` or
/// `"max-bodies:<k>"`; `options` may be null for defaults.
///
/// # Safety
/// `t` must be a live handle, `policy` a NUL-terminated string, `out` a valid
/// pointer; `options` may be null.
#[no_mangle]
pub unsafe extern "C" fn npa_analyze_table(
    t: *const NpaTable,
    level: usize,
    policy_name: *const c_char,
    options: *const NpaSolverOptions,
    out: *mut *mut NpaReport,
) -> NpaStatus {
    guard(|| {
        let t = handle(t, "table")?;
        let request = AnalysisRequest {
            source: Source::Measured(t.0.clone()),
            scenario: *t.0.scenario(),
            level,
            policy: policy(str_arg(policy_name, "policy")?)?,
            pin_mode: PinMode::Point,
            solver: solver(options),
        };
        let report = analyze(&request).map_err(analysis_failure)?;
        emit(out, NpaReport(report))
    })
}

/// Parses a verdict report document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_report_from_json(json: *const c_char, out: *mut *mut NpaReport) -> NpaStatus {
    guard(|| {
        let doc = str_arg(json, "json")?;
        let report = VerdictReport::from_json(doc).map_err(analysis_failure)?;
        emit(out, NpaReport(report))
    })
}

/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn npa_report_free(r: *mut NpaReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `r` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_report_verdict(r: *const NpaReport, out: *mut NpaVerdict) -> NpaStatus {
    guard(|| {
        let r = handle(r, "report")?;
        let out = out.as_mut().ok_or_else(|| Failure(NpaStatus::NullPointer, "out is null".into()))?;
        *out = match r.0.verdict() {
            Verdict::Nonlocal => NpaVerdict::Nonlocal,
            Verdict::Inconclusive => NpaVerdict::Inconclusive,
        };
        Ok(())
    })
}

/// Optimal minimum eigenvalue, or NaN for a null handle.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn npa_report_lambda_star(r: *const NpaReport) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.lambda_star())
}

/// Re-verifies the report's certificate against a family rebuilt from the
/// report itself.
///
/// # Safety
/// `r` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_report_recheck(r: *const NpaReport, out: *mut bool) -> NpaStatus {
    guard(|| {
        let r = handle(r, "report")?;
        let out = out.as_mut().ok_or_else(|| Failure(NpaStatus::NullPointer, "out is null".into()))?;
        *out = recheck_report(&r.0).map_err(analysis_failure)?;
        Ok(())
    })
}

/// # Safety
/// `r` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn npa_report_to_json(r: *const NpaReport, out: *mut *mut c_char) -> NpaStatus {
    guard(|| {
        let r = handle(r, "report")?;
        emit_string(out, r.0.to_json())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn npa_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
