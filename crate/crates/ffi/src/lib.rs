//! C ABI over the experiment harness. All entry points are panic-safe,
//! return an `OsnStatus` code, and report details through a thread-local
//! error message readable with `osn_last_error`.
//!
//! The generated header lands in `include/oversketch.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use oversketch::harness::{ExperimentConfig, HarnessError, RunSummary};
use oversketch::solver::Termination;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsnStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The experiment configuration failed validation.
    InvalidConfig = 3,
    /// File system error while reading the config or writing the trace.
    IoError = 4,
    /// The solver reported an error (not a normal non-converged exit).
    SolverError = 5,
    /// An internal panic was caught at the boundary.
    Internal = 6,
}

/// Termination reason of a finished run, mirroring the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsnTermination {
    Converged = 0,
    MaxIterations = 2,
    LineSearchStalled = 3,
}

/// Flat result of a finished experiment run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OsnRunSummary {
    pub termination: OsnTermination,
    /// Iterations recorded in the trace.
    pub iterations: u64,
    pub final_f: f64,
    pub final_grad_norm: f64,
    /// Cumulative virtual time of the run.
    pub total_virtual_time: f64,
}

/// Opaque handle to a loaded experiment configuration.
pub struct OsnExperiment {
    cfg: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &HarnessError) -> OsnStatus {
    match err {
        HarnessError::Config { .. } => OsnStatus::InvalidConfig,
        HarnessError::Io { .. } => OsnStatus::IoError,
        _ => OsnStatus::SolverError,
    }
}

fn fail(status: OsnStatus, msg: impl Into<String>) -> OsnStatus {
    set_error(msg);
    status
}

/// Runs `body` with panics converted into `OsnStatus::Internal`.
fn guarded(body: impl FnOnce() -> OsnStatus) -> OsnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".to_string());
            fail(OsnStatus::Internal, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated C string valid for reads.
unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, OsnStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(OsnStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        OsnStatus::InvalidUtf8
    })
}

/// Copies the last error message for this thread into `buf` (NUL terminated,
/// truncated to `len` bytes) and returns the full message length in bytes,
/// excluding the terminator. `buf` may be null to query the length.
///
/// # Safety
/// `buf`, when non-null, must be valid for writes of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn osn_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses an experiment configuration from TOML text.
/// On success writes an owned handle to `*out`; release with
/// `osn_experiment_free`.
///
/// # Safety
/// `toml_text` must be a valid NUL-terminated C string and `out` a valid
/// pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn osn_experiment_parse(
    toml_text: *const c_char,
    out: *mut *mut OsnExperiment,
) -> OsnStatus {
    if out.is_null() {
        return fail(OsnStatus::NullArgument, "out handle pointer is null");
    }
    let text = match utf8_arg(toml_text) {
        Ok(t) => t,
        Err(s) => return s,
    };
    guarded(|| match ExperimentConfig::from_str_validated(text) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(OsnExperiment { cfg }));
            OsnStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    })
}

/// Loads and validates an experiment configuration from a TOML file.
///
/// # Safety
/// `path` must be a valid NUL-terminated C string and `out` a valid pointer
/// to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn osn_experiment_load(
    path: *const c_char,
    out: *mut *mut OsnExperiment,
) -> OsnStatus {
    if out.is_null() {
        return fail(OsnStatus::NullArgument, "out handle pointer is null");
    }
    let path = match utf8_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guarded(|| match ExperimentConfig::from_path(Path::new(path)) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(OsnExperiment { cfg }));
            OsnStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    })
}

/// Runs the experiment and writes the trace CSV. `seed_override` may be null
/// to use the configured seed; `out_path` may be null to use the configured
/// output location. `summary` may be null if the caller only wants the
/// side-effect trace file.
///
/// # Safety
/// `exp` must be a live handle from `osn_experiment_load`/`parse`. `out_path`,
/// when non-null, must be a valid NUL-terminated C string. `seed_override`
/// and `summary`, when non-null, must point to valid storage.
#[no_mangle]
pub unsafe extern "C" fn osn_experiment_run(
    exp: *const OsnExperiment,
    seed_override: *const u64,
    out_path: *const c_char,
    summary: *mut OsnRunSummary,
) -> OsnStatus {
    if exp.is_null() {
        return fail(OsnStatus::NullArgument, "experiment handle is null");
    }
    let seed = if seed_override.is_null() {
        None
    } else {
        Some(*seed_override)
    };
    let out: Option<PathBuf> = if out_path.is_null() {
        None
    } else {
        match utf8_arg(out_path) {
            Ok(p) => Some(PathBuf::from(p)),
            Err(s) => return s,
        }
    };
    let cfg = &(*exp).cfg;
    guarded(|| match oversketch::harness::run_experiment(cfg, seed, out.as_deref()) {
        Ok(run) => {
            if !summary.is_null() {
                *summary = convert_summary(&run);
            }
            OsnStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    })
}

fn convert_summary(run: &RunSummary) -> OsnRunSummary {
    OsnRunSummary {
        termination: match run.termination {
            Termination::Converged => OsnTermination::Converged,
            Termination::MaxIters => OsnTermination::MaxIterations,
            Termination::LineSearchStalled => OsnTermination::LineSearchStalled,
        },
        iterations: run.iterations as u64,
        final_f: run.final_f,
        final_grad_norm: run.final_grad_norm,
        total_virtual_time: run.total_vt,
    }
}

/// Releases a handle returned by `osn_experiment_load`/`parse`.
/// Passing null is a no-op.
///
/// # Safety
/// `exp` must be null or a live handle that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn osn_experiment_free(exp: *mut OsnExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn toy_config(out: &Path) -> CString {
        CString::new(format!(
            r#"
seed = 21
output = "{}"

[problem]
kind = "ridge"
lambda = 1e-2

[problem.synthetic]
num_samples = 200
num_features = 8
seed = 3

[solver]
method = "newton"
direction = "strongly-convex"
hessian = "exact"
block_dim = 8
max_iters = 10
grad_tol = 1e-10
num_shards = 4
"#,
            out.display()
        ))
        .unwrap()
    }

    #[test]
    fn parse_run_free_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("trace.csv");
        let text = toy_config(&csv);
        let mut handle: *mut OsnExperiment = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                osn_experiment_parse(text.as_ptr(), &mut handle),
                OsnStatus::Ok
            );
            let mut summary = OsnRunSummary {
                termination: OsnTermination::MaxIterations,
                iterations: 0,
                final_f: f64::NAN,
                final_grad_norm: f64::NAN,
                total_virtual_time: f64::NAN,
            };
            assert_eq!(
                osn_experiment_run(handle, std::ptr::null(), std::ptr::null(), &mut summary),
                OsnStatus::Ok
            );
            assert_eq!(summary.termination, OsnTermination::Converged);
            assert!(summary.final_grad_norm <= 1e-10);
            assert!(summary.total_virtual_time.is_finite());
            osn_experiment_free(handle);
        }
        assert!(csv.exists());
    }

    #[test]
    fn load_reads_config_files() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("trace.csv");
        let cfg_path = dir.path().join("exp.toml");
        std::fs::write(&cfg_path, toy_config(&csv).to_str().unwrap()).unwrap();
        let c_path = CString::new(cfg_path.to_str().unwrap()).unwrap();
        let mut handle: *mut OsnExperiment = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                osn_experiment_load(c_path.as_ptr(), &mut handle),
                OsnStatus::Ok
            );
            let seed = 99u64;
            assert_eq!(
                osn_experiment_run(handle, &seed, std::ptr::null(), std::ptr::null_mut()),
                OsnStatus::Ok
            );
            osn_experiment_free(handle);
        }
        assert!(csv.exists());
    }

    #[test]
    fn bad_config_reports_through_last_error() {
        let text = CString::new("seed = \"not a number\"").unwrap();
        let mut handle: *mut OsnExperiment = std::ptr::null_mut();
        let status = unsafe { osn_experiment_parse(text.as_ptr(), &mut handle) };
        assert_eq!(status, OsnStatus::InvalidConfig);
        assert!(handle.is_null());
        let mut buf = vec![0i8; 256];
        let n = unsafe { osn_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(n > 0);
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert!(!msg.is_empty());
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut handle: *mut OsnExperiment = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                osn_experiment_parse(std::ptr::null(), &mut handle),
                OsnStatus::NullArgument
            );
            assert_eq!(
                osn_experiment_run(
                    std::ptr::null(),
                    std::ptr::null(),
                    std::ptr::null(),
                    std::ptr::null_mut()
                ),
                OsnStatus::NullArgument
            );
            osn_experiment_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn missing_file_maps_to_io_error() {
        let c_path = CString::new("/nonexistent/exp.toml").unwrap();
        let mut handle: *mut OsnExperiment = std::ptr::null_mut();
        let status = unsafe { osn_experiment_load(c_path.as_ptr(), &mut handle) };
        assert_eq!(status, OsnStatus::IoError);
    }
}
