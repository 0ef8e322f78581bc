//! C ABI over the incidence estimators: load subject-record and assay CSV
//! files into an opaque dataset handle, then evaluate any estimator on it,
//! with or without a bootstrap interval.
//!
//! Every function returns a `RECENCY_*` status code; on a nonzero code the
//! thread-local message from `recency_last_error` describes the failure.
//! Handles are not thread-safe; share a dataset across threads read-only
//! only after loading completes.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use recency::bootstrap::{self, BootstrapInputs, BootstrapPlan, RoundData};
use recency::config::{encoding_from_name, interval_from_name, scheme_from_name, EstimatorId};
use recency::estimators::CalibrationSet;
use recency::experiment::evaluate_estimator;
use recency::io::{read_assays, read_subject_records, SubtypeRegistry};
use recency::records::SubjectRecord;
use recency::rng::RngStream;
use recency::weights::FeatureEncoding;
use recency::Error;

/// Success.
pub const RECENCY_OK: c_int = 0;
/// Filesystem failure (unreadable or unwritable path).
pub const RECENCY_ERR_IO: c_int = 1;
/// Malformed input file or unusable configuration value.
pub const RECENCY_ERR_SCHEMA: c_int = 2;
/// An estimator or calibration precondition does not hold for the data.
pub const RECENCY_ERR_PRECONDITION: c_int = 3;
/// A numeric routine failed to converge or met a non-finite value.
pub const RECENCY_ERR_NUMERIC: c_int = 4;
/// Misused ABI: null pointer, invalid UTF-8, or a bad handle.
pub const RECENCY_ERR_ARGUMENT: c_int = 5;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let stored = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error text").expect("static text"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = stored);
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::default());
}

fn fail(code: c_int, message: &str) -> c_int {
    set_error(message);
    code
}

fn fail_with(e: &Error) -> c_int {
    fail(e.exit_code() as c_int, &e.to_string())
}

/// Wraps a body so a panic can never unwind across the ABI.
fn guarded(body: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => fail(RECENCY_ERR_NUMERIC, "internal panic"),
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for the call.
unsafe fn required_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        return Err(fail(RECENCY_ERR_ARGUMENT, &format!("{what} must not be null")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail(RECENCY_ERR_ARGUMENT, &format!("{what} must be valid UTF-8")))
}

/// Opaque dataset handle: subject records plus assay calibration.
pub struct RecencyDataset {
    cross: Vec<SubjectRecord>,
    target: Option<Vec<SubjectRecord>>,
    calibration: CalibrationSet,
}

/// One bootstrapped estimate. `lo`/`hi` bound the 95% interval; `se` is the
/// replicate standard deviation; `failures` counts rounds whose estimator
/// failed; `unreliable` is set when more than 10% of rounds failed.
#[repr(C)]
#[derive(Default, Clone, Copy)]
pub struct RecencyInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub se: f64,
    pub rounds: u32,
    pub failures: u32,
    pub nonpositive: u32,
    pub unreliable: bool,
}

/// ABI revision; bumped on any breaking change to this header.
#[no_mangle]
pub extern "C" fn recency_abi_version() -> u32 {
    1
}

/// The message for the most recent failure on this thread, empty when the
/// last call succeeded. The pointer stays valid until the next call into
/// this library from the same thread.
#[no_mangle]
pub extern "C" fn recency_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a dataset: a cross-sectional records CSV, an optional external
/// target records CSV (`target_csv` may be null), and an assay spec CSV
/// whose exact MDRI/FRR calibrate the estimators. On success `*out` owns
/// the handle; free it with `recency_dataset_free`.
///
/// # Safety
/// Path arguments follow `recency_last_error`'s string rules; `out` must
/// point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn recency_dataset_load(
    cross_csv: *const c_char,
    target_csv: *const c_char,
    assays_csv: *const c_char,
    out: *mut *mut RecencyDataset,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(RECENCY_ERR_ARGUMENT, "out must not be null");
        }
        let cross_path = match unsafe { required_str(cross_csv, "cross_csv") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        let assay_path = match unsafe { required_str(assays_csv, "assays_csv") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        let target_path = if target_csv.is_null() {
            None
        } else {
            match unsafe { required_str(target_csv, "target_csv") } {
                Ok(s) => Some(s),
                Err(code) => return code,
            }
        };

        let mut registry = SubtypeRegistry::default();
        let cross = match read_subject_records(Path::new(cross_path), &mut registry) {
            Ok(v) => v,
            Err(e) => return fail_with(&e),
        };
        let target = match target_path {
            None => None,
            Some(p) => match read_subject_records(Path::new(p), &mut registry) {
                Ok(v) => Some(v),
                Err(e) => return fail_with(&e),
            },
        };
        let calibration = match read_assays(Path::new(assay_path), &mut registry)
            .and_then(|a| a.calibration_true())
        {
            Ok(c) => c,
            Err(e) => return fail_with(&e),
        };

        let handle = Box::new(RecencyDataset { cross, target, calibration });
        unsafe { out.write(Box::into_raw(handle)) };
        clear_error();
        RECENCY_OK
    })
}

/// Record counts of a loaded dataset; `target_size` is 0 when no target
/// file was loaded. Null output pointers are skipped.
///
/// # Safety
/// `handle` must come from `recency_dataset_load` and not be freed.
#[no_mangle]
pub unsafe extern "C" fn recency_dataset_counts(
    handle: *const RecencyDataset,
    cross_size: *mut usize,
    target_size: *mut usize,
) -> c_int {
    guarded(|| {
        let Some(data) = (unsafe { handle.as_ref() }) else {
            return fail(RECENCY_ERR_ARGUMENT, "handle must not be null");
        };
        if !cross_size.is_null() {
            unsafe { cross_size.write(data.cross.len()) };
        }
        if !target_size.is_null() {
            unsafe { target_size.write(data.target.as_ref().map_or(0, Vec::len)) };
        }
        clear_error();
        RECENCY_OK
    })
}

/// Frees a dataset handle; a null handle is a no-op.
///
/// # Safety
/// `handle` must come from `recency_dataset_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn recency_dataset_free(handle: *mut RecencyDataset) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

fn parse_choices(
    estimator: &str,
    encoding: &str,
) -> Result<(EstimatorId, FeatureEncoding), c_int> {
    let id = EstimatorId::from_name(estimator).map_err(|e| fail_with(&e))?;
    let enc = encoding_from_name(encoding).map_err(|e| fail_with(&e))?;
    Ok((id, enc))
}

/// Point estimate of incidence (events per person-year). `estimator` is a
/// name from the CLI set (`standard`, `extended-external`, ...); `encoding`
/// is `main_effects` or `saturated`.
///
/// # Safety
/// `handle` as in `recency_dataset_counts`; strings as in
/// `recency_dataset_load`; `out_estimate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recency_estimate(
    handle: *const RecencyDataset,
    estimator: *const c_char,
    encoding: *const c_char,
    out_estimate: *mut f64,
) -> c_int {
    guarded(|| {
        let Some(data) = (unsafe { handle.as_ref() }) else {
            return fail(RECENCY_ERR_ARGUMENT, "handle must not be null");
        };
        if out_estimate.is_null() {
            return fail(RECENCY_ERR_ARGUMENT, "out_estimate must not be null");
        }
        let estimator = match unsafe { required_str(estimator, "estimator") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        let encoding = match unsafe { required_str(encoding, "encoding") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        let (id, enc) = match parse_choices(estimator, encoding) {
            Ok(pair) => pair,
            Err(code) => return code,
        };
        match evaluate_estimator(id, &data.cross, data.target.as_deref(), &data.calibration, enc) {
            Ok(result) => {
                unsafe { out_estimate.write(result.estimate) };
                clear_error();
                RECENCY_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Bootstrapped estimate: `scheme` is `nonparametric` or `parametric`,
/// `interval` is `lognormal_normal_approx` or `log_percentile`, `rounds`
/// must be at least 2, and `seed` fixes the resampling stream (equal seeds
/// reproduce bit-equal intervals).
///
/// # Safety
/// As for `recency_estimate`; `out` must point to writable storage for one
/// `RecencyInterval`.
#[no_mangle]
pub unsafe extern "C" fn recency_estimate_ci(
    handle: *const RecencyDataset,
    estimator: *const c_char,
    encoding: *const c_char,
    scheme: *const c_char,
    interval: *const c_char,
    rounds: u32,
    seed: u64,
    out: *mut RecencyInterval,
) -> c_int {
    guarded(|| {
        let Some(data) = (unsafe { handle.as_ref() }) else {
            return fail(RECENCY_ERR_ARGUMENT, "handle must not be null");
        };
        if out.is_null() {
            return fail(RECENCY_ERR_ARGUMENT, "out must not be null");
        }
        let estimator = match unsafe { required_str(estimator, "estimator") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        let encoding = match unsafe { required_str(encoding, "encoding") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        let scheme = match unsafe { required_str(scheme, "scheme") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        let interval = match unsafe { required_str(interval, "interval") } {
            Ok(s) => s,
            Err(code) => return code,
        };
        let (id, enc) = match parse_choices(estimator, encoding) {
            Ok(pair) => pair,
            Err(code) => return code,
        };
        let scheme = match scheme_from_name(scheme) {
            Ok(s) => s,
            Err(e) => return fail_with(&e),
        };
        let interval = match interval_from_name(interval) {
            Ok(i) => i,
            Err(e) => return fail_with(&e),
        };

        let point = match evaluate_estimator(
            id,
            &data.cross,
            data.target.as_deref(),
            &data.calibration,
            enc,
        ) {
            Ok(r) => r.estimate,
            Err(e) => return fail_with(&e),
        };

        // Calibration is exact here (no panels over the ABI), so panel
        // resampling stays off in both schemes.
        let plan = BootstrapPlan {
            scheme,
            rounds: rounds as usize,
            resample_panels: false,
            interval,
            ..BootstrapPlan::default()
        };
        let inputs = BootstrapInputs {
            cross: &data.cross,
            target: data.target.as_deref(),
            panels: &[],
            calibration: &data.calibration,
            trial: None,
        };
        let eval = |round: &RoundData| {
            vec![evaluate_estimator(
                id,
                &round.cross,
                round.target.as_deref(),
                &round.calibration,
                enc,
            )
            .map(|r| r.estimate)]
        };
        let rng = RngStream::new(seed, 0).child(1_000_000);
        match bootstrap::run(&plan, &inputs, 1, eval, &rng) {
            Ok(cis) => {
                let ci = cis[0];
                unsafe {
                    out.write(RecencyInterval {
                        estimate: point,
                        lo: ci.lo,
                        hi: ci.hi,
                        se: ci.se,
                        rounds: ci.rounds as u32,
                        failures: ci.failures as u32,
                        nonpositive: ci.nonpositive as u32,
                        unreliable: ci.unreliable,
                    });
                }
                clear_error();
                RECENCY_OK
            }
            Err(e) => fail_with(&e),
        }
    })
}
