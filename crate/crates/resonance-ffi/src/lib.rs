//! C ABI for the resonance solver library.
//!
//! All entry points are panic-safe: panics are caught at the boundary and
//! surfaced as `RSN_STATUS_PANIC`. Handles are opaque; every object returned
//! through an out-pointer must be released with the matching `*_free`
//! function. Functions that can fail record a message retrievable with
//! `rsn_last_error_message` on the calling thread.

use resonance::config::parse_spec;
use resonance::engine::{Accel, SolveOptions, SolveReport, SolveStatus};
use resonance::problem::ProblemSpec;
use resonance::report::{condition_json, solve_json};
use resonance::solvability::{check_condition, Verdict};
use resonance::ResonanceError;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)] // C-facing spelling, mirrored into the header
pub enum RsnStatus {
    RSN_STATUS_OK = 0,
    RSN_STATUS_NULL_ARGUMENT = 1,
    RSN_STATUS_INVALID_UTF8 = 2,
    RSN_STATUS_INVALID_SPEC = 3,
    RSN_STATUS_CONDITION_VIOLATED = 4,
    RSN_STATUS_NO_CONVERGENCE = 5,
    RSN_STATUS_OUT_OF_RANGE = 6,
    RSN_STATUS_PANIC = 7,
}

use RsnStatus::*;

/// Outcome of a solve, mirrored from the report.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)] // C-facing spelling, mirrored into the header
pub enum RsnSolveStatus {
    RSN_SOLVE_CONVERGED = 0,
    RSN_SOLVE_MAX_ITER = 1,
    RSN_SOLVE_DIVERGED = 2,
    RSN_SOLVE_CONDITION_VIOLATED = 3,
}

/// Verdict of a solvability check.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)] // C-facing spelling, mirrored into the header
pub enum RsnVerdict {
    RSN_VERDICT_HOLDS = 0,
    RSN_VERDICT_FAILS = 1,
    RSN_VERDICT_BOUNDARY = 2,
}

/// An opaque problem handle: a parsed specification plus solver options.
pub struct RsnProblem {
    spec: ProblemSpec,
    opts: SolveOptions,
}

/// An opaque solve report handle.
pub struct RsnReport {
    report: SolveReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn error_code(e: &ResonanceError) -> RsnStatus {
    set_error(&e.to_string());
    RSN_STATUS_INVALID_SPEC
}

/// Run a body with panic containment at the ABI boundary.
fn guarded(body: impl FnOnce() -> RsnStatus) -> RsnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic crossed the ABI boundary");
            RSN_STATUS_PANIC
        }
    }
}

/// Copy the most recent error message on this thread into `buf` (NUL
/// terminated, truncated to `cap` bytes). Returns the full message length in
/// bytes, excluding the terminator; call with a null `buf` to size a buffer.
#[no_mangle]
pub unsafe extern "C" fn rsn_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Parse a TOML problem specification. On success `*out` owns a new handle.
#[no_mangle]
pub unsafe extern "C" fn rsn_problem_parse(
    text: *const c_char,
    out: *mut *mut RsnProblem,
) -> RsnStatus {
    if text.is_null() || out.is_null() {
        return RSN_STATUS_NULL_ARGUMENT;
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("specification text is not valid UTF-8");
            return RSN_STATUS_INVALID_UTF8;
        }
    };
    guarded(|| match parse_spec(text) {
        Ok((spec, opts)) => {
            *out = Box::into_raw(Box::new(RsnProblem { spec, opts }));
            RSN_STATUS_OK
        }
        Err(e) => error_code(&e),
    })
}

/// Release a problem handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rsn_problem_free(problem: *mut RsnProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Override the solver options carried by a handle. An `anderson_depth` of
/// zero selects plain relaxation; `gate` is a boolean flag.
#[no_mangle]
pub unsafe extern "C" fn rsn_problem_set_options(
    problem: *mut RsnProblem,
    tol: f64,
    max_iter: usize,
    relax: f64,
    anderson_depth: usize,
    gate: i32,
) -> RsnStatus {
    if problem.is_null() {
        return RSN_STATUS_NULL_ARGUMENT;
    }
    guarded(|| {
        let opts = SolveOptions {
            tol,
            max_iter,
            relax,
            accel: if anderson_depth == 0 {
                Accel::None
            } else {
                Accel::Anderson {
                    depth: anderson_depth,
                }
            },
            gate: gate != 0,
        };
        if let Err(e) = opts.validate() {
            return error_code(&e);
        }
        (*problem).opts = opts;
        RSN_STATUS_OK
    })
}

fn verdict_code(v: Verdict) -> RsnVerdict {
    match v {
        Verdict::Holds => RsnVerdict::RSN_VERDICT_HOLDS,
        Verdict::Fails => RsnVerdict::RSN_VERDICT_FAILS,
        Verdict::Boundary => RsnVerdict::RSN_VERDICT_BOUNDARY,
    }
}

/// Evaluate the family's solvability condition. `margin` and `verdict` may
/// each be null when the caller does not need them. Returns
/// `RSN_STATUS_CONDITION_VIOLATED` when the condition fails, which still
/// writes both outputs.
#[no_mangle]
pub unsafe extern "C" fn rsn_check(
    problem: *const RsnProblem,
    margin: *mut f64,
    verdict: *mut RsnVerdict,
) -> RsnStatus {
    if problem.is_null() {
        return RSN_STATUS_NULL_ARGUMENT;
    }
    guarded(|| match check_condition(&(*problem).spec) {
        Ok(report) => {
            if !margin.is_null() {
                *margin = report.margin;
            }
            if !verdict.is_null() {
                *verdict = verdict_code(report.verdict);
            }
            if report.verdict == Verdict::Fails {
                set_error("solvability condition fails");
                RSN_STATUS_CONDITION_VIOLATED
            } else {
                RSN_STATUS_OK
            }
        }
        Err(e) => error_code(&e),
    })
}

/// Evaluate the solvability condition and return its JSON report through
/// `out`; release with `rsn_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rsn_check_json(
    problem: *const RsnProblem,
    out: *mut *mut c_char,
) -> RsnStatus {
    if problem.is_null() || out.is_null() {
        return RSN_STATUS_NULL_ARGUMENT;
    }
    guarded(|| match check_condition(&(*problem).spec) {
        Ok(report) => {
            let doc = condition_json(&report, true);
            *out = CString::new(doc).unwrap().into_raw();
            RSN_STATUS_OK
        }
        Err(e) => error_code(&e),
    })
}

fn solve_status_code(report: &SolveReport) -> RsnStatus {
    match report.status {
        SolveStatus::Converged => RSN_STATUS_OK,
        SolveStatus::ConditionViolated => {
            set_error("solvability condition fails; solve aborted by the gate");
            RSN_STATUS_CONDITION_VIOLATED
        }
        SolveStatus::MaxIter | SolveStatus::Diverged => {
            set_error("iteration did not converge");
            RSN_STATUS_NO_CONVERGENCE
        }
    }
}

/// Run the solver. A report handle is produced through `out` whenever the
/// solver itself ran, including non-converged outcomes; the return value
/// summarizes the report status. Specification-level failures produce no
/// report.
#[no_mangle]
pub unsafe extern "C" fn rsn_solve(
    problem: *const RsnProblem,
    out: *mut *mut RsnReport,
) -> RsnStatus {
    if problem.is_null() || out.is_null() {
        return RSN_STATUS_NULL_ARGUMENT;
    }
    guarded(|| {
        let handle = &*problem;
        match resonance::solve_problem(&handle.spec, &handle.opts) {
            Ok(report) => {
                let status = solve_status_code(&report);
                *out = Box::into_raw(Box::new(RsnReport { report }));
                status
            }
            Err(e) => error_code(&e),
        }
    })
}

/// Release a report handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rsn_report_free(report: *mut RsnReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rsn_report_status(report: *const RsnReport) -> RsnSolveStatus {
    match (*report).report.status {
        SolveStatus::Converged => RsnSolveStatus::RSN_SOLVE_CONVERGED,
        SolveStatus::MaxIter => RsnSolveStatus::RSN_SOLVE_MAX_ITER,
        SolveStatus::Diverged => RsnSolveStatus::RSN_SOLVE_DIVERGED,
        SolveStatus::ConditionViolated => RsnSolveStatus::RSN_SOLVE_CONDITION_VIOLATED,
    }
}

#[no_mangle]
pub unsafe extern "C" fn rsn_report_residual_l2(report: *const RsnReport) -> f64 {
    (*report).report.residual_l2
}

#[no_mangle]
pub unsafe extern "C" fn rsn_report_residual_sup(report: *const RsnReport) -> f64 {
    (*report).report.residual_sup
}

#[no_mangle]
pub unsafe extern "C" fn rsn_report_iterations(report: *const RsnReport) -> usize {
    (*report).report.iterations
}

/// Number of solution components: 1 for scalar and periodic families, 2 for
/// systems, 0 when the solve aborted before producing a candidate.
#[no_mangle]
pub unsafe extern "C" fn rsn_report_components(report: *const RsnReport) -> usize {
    (*report).report.solution.len()
}

/// Number of grid samples per solution component.
#[no_mangle]
pub unsafe extern "C" fn rsn_report_sample_count(report: *const RsnReport) -> usize {
    (*report)
        .report
        .solution
        .first()
        .map(|f| f.samples.len())
        .unwrap_or(0)
}

/// Copy the grid samples of one solution component into `buf`, which must
/// hold `rsn_report_sample_count` values.
#[no_mangle]
pub unsafe extern "C" fn rsn_report_samples(
    report: *const RsnReport,
    component: usize,
    buf: *mut f64,
    len: usize,
) -> RsnStatus {
    if report.is_null() || buf.is_null() {
        return RSN_STATUS_NULL_ARGUMENT;
    }
    guarded(|| {
        let solution = &(*report).report.solution;
        let Some(field) = solution.get(component) else {
            set_error("component index out of range");
            return RSN_STATUS_OUT_OF_RANGE;
        };
        if len < field.samples.len() {
            set_error("sample buffer too small");
            return RSN_STATUS_OUT_OF_RANGE;
        }
        std::ptr::copy_nonoverlapping(field.samples.as_ptr(), buf, field.samples.len());
        RSN_STATUS_OK
    })
}

/// Serialize the full report (without the raw solution) as JSON; release
/// with `rsn_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rsn_report_json(
    report: *const RsnReport,
    out: *mut *mut c_char,
) -> RsnStatus {
    if report.is_null() || out.is_null() {
        return RSN_STATUS_NULL_ARGUMENT;
    }
    guarded(|| {
        let doc = solve_json(&(*report).report, true);
        *out = CString::new(doc).unwrap().into_raw();
        RSN_STATUS_OK
    })
}

/// Release a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rsn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    const SPEC: &str = r#"
[problem]
family = "scalar_resonant"
resonant_index = 1

[domain]
kind = "interval"
grid_size = 64
modes = 16

[nonlinearity]
base = "arctan"

[forcing]
coeffs = { "2" = 0.4 }
"#;

    unsafe fn parse(text: &str) -> (RsnStatus, *mut RsnProblem) {
        let c = CString::new(text).unwrap();
        let mut handle: *mut RsnProblem = ptr::null_mut();
        let status = rsn_problem_parse(c.as_ptr(), &mut handle);
        (status, handle)
    }

    #[test]
    fn parse_solve_and_inspect() {
        unsafe {
            let (status, problem) = parse(SPEC);
            assert_eq!(status, RSN_STATUS_OK);

            let mut margin = f64::NAN;
            let mut verdict = RsnVerdict::RSN_VERDICT_FAILS;
            assert_eq!(rsn_check(problem, &mut margin, &mut verdict), RSN_STATUS_OK);
            assert!(margin > 0.0);
            assert_eq!(verdict, RsnVerdict::RSN_VERDICT_HOLDS);

            let mut report: *mut RsnReport = ptr::null_mut();
            assert_eq!(rsn_solve(problem, &mut report), RSN_STATUS_OK);
            assert_eq!(
                rsn_report_status(report),
                RsnSolveStatus::RSN_SOLVE_CONVERGED
            );
            assert!(rsn_report_residual_l2(report) < 1e-8);
            assert_eq!(rsn_report_components(report), 1);
            let n = rsn_report_sample_count(report);
            assert!(n >= 64);
            let mut samples = vec![0.0; n];
            assert_eq!(
                rsn_report_samples(report, 0, samples.as_mut_ptr(), n),
                RSN_STATUS_OK
            );
            assert!(samples.iter().any(|&v| v.abs() > 1e-3));
            assert_eq!(
                rsn_report_samples(report, 1, samples.as_mut_ptr(), n),
                RSN_STATUS_OUT_OF_RANGE
            );

            let mut doc: *mut c_char = ptr::null_mut();
            assert_eq!(rsn_report_json(report, &mut doc), RSN_STATUS_OK);
            let text = CStr::from_ptr(doc).to_str().unwrap().to_string();
            rsn_string_free(doc);
            let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(parsed["status"], "converged");

            rsn_report_free(report);
            rsn_problem_free(problem);
        }
    }

    #[test]
    fn invalid_spec_reports_a_message() {
        unsafe {
            let (status, handle) = parse(&SPEC.replace("scalar_resonant", "nope"));
            assert_eq!(status, RSN_STATUS_INVALID_SPEC);
            assert!(handle.is_null());
            let n = rsn_last_error_message(ptr::null_mut(), 0);
            assert!(n > 0);
            let mut buf = vec![0i8; n + 1];
            let m = rsn_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len());
            assert_eq!(m, n);
            let msg = CStr::from_ptr(buf.as_ptr() as *const c_char)
                .to_str()
                .unwrap();
            assert!(msg.contains("family"), "{msg}");
        }
    }

    #[test]
    fn gated_solve_surfaces_condition_violation() {
        unsafe {
            let spec = SPEC.replace("\"2\" = 0.4", "\"1\" = 3.0");
            let (status, problem) = parse(&spec);
            assert_eq!(status, RSN_STATUS_OK);
            assert_eq!(
                rsn_problem_set_options(problem, 1e-8, 200, 0.5, 0, 1),
                RSN_STATUS_OK
            );
            let mut verdict = RsnVerdict::RSN_VERDICT_HOLDS;
            assert_eq!(
                rsn_check(problem, ptr::null_mut(), &mut verdict),
                RSN_STATUS_CONDITION_VIOLATED
            );
            assert_eq!(verdict, RsnVerdict::RSN_VERDICT_FAILS);
            let mut report: *mut RsnReport = ptr::null_mut();
            assert_eq!(rsn_solve(problem, &mut report), RSN_STATUS_CONDITION_VIOLATED);
            assert_eq!(
                rsn_report_status(report),
                RsnSolveStatus::RSN_SOLVE_CONDITION_VIOLATED
            );
            rsn_report_free(report);
            rsn_problem_free(problem);
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert_eq!(
                rsn_problem_parse(ptr::null(), ptr::null_mut()),
                RSN_STATUS_NULL_ARGUMENT
            );
            assert_eq!(
                rsn_solve(ptr::null(), ptr::null_mut()),
                RSN_STATUS_NULL_ARGUMENT
            );
            rsn_problem_free(ptr::null_mut());
            rsn_report_free(ptr::null_mut());
            rsn_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn option_validation_is_enforced() {
        unsafe {
            let (status, problem) = parse(SPEC);
            assert_eq!(status, RSN_STATUS_OK);
            assert_eq!(
                rsn_problem_set_options(problem, -1.0, 200, 0.5, 0, 0),
                RSN_STATUS_INVALID_SPEC
            );
            rsn_problem_free(problem);
        }
    }
}
