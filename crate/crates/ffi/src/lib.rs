//! C ABI over the toolkit.
//!
//! Handles (`SurvkitKm`, `SurvkitCox`) are opaque pointers owned by this
//! library; every constructor has a matching `_free`, and freeing a null
//! pointer is a no-op. Functions return a [`SurvkitStatus`]; on any non-ok
//! status, `survkit_last_error_message` returns a thread-local description
//! valid until the next failing call on the same thread.
//!
//! Output buffers are caller-allocated; query lengths first (for instance
//! `survkit_km_len`). Array arguments must point to at least the stated
//! number of elements. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

use libc::c_char;

use survkit::cox::{fit_cox, predict_risk, CoxFit, CoxOptions};
use survkit::error::Error;
use survkit::metrics::concordance_index;
use survkit::pipeline::{run_pipeline, PipelineConfig};
use survkit::survival::{kaplan_meier, logrank_two_sample, KmCurve, SurvivalOutcome};
use survkit::table::FeatureTable;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvkitStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Arguments were malformed: empty, mismatched, non-finite, bad UTF-8.
    InvalidInput = 2,
    /// The computation is undefined or unstable on these inputs.
    NumericFailure = 3,
    /// The cohort has no observed events.
    NoEvents = 4,
    /// File or serialization failure.
    IoFailure = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(error: &Error) -> SurvkitStatus {
    match error {
        Error::Stage { source, .. } => status_of(source),
        Error::NoEvents => SurvkitStatus::NoEvents,
        Error::EmptyInput(_)
        | Error::InvalidInput(_)
        | Error::NonFinite(_)
        | Error::LengthMismatch { .. }
        | Error::InvalidConfig(_)
        | Error::UnknownColumn(_)
        | Error::UnknownVariable(_)
        | Error::Parse { .. }
        | Error::UnmappedCategory { .. }
        | Error::NonNumericValue { .. }
        | Error::UnknownStageCode { .. }
        | Error::MissingBoundary(_)
        | Error::BudgetTooSmall(_) => SurvkitStatus::InvalidInput,
        Error::Io(_) | Error::Csv(_) | Error::Toml(_) | Error::Json(_) => {
            SurvkitStatus::IoFailure
        }
        _ => SurvkitStatus::NumericFailure,
    }
}

fn fail(error: Error) -> SurvkitStatus {
    set_error(&error.to_string());
    status_of(&error)
}

fn null_arg(name: &str) -> SurvkitStatus {
    set_error(&format!("argument '{name}' is null"));
    SurvkitStatus::NullPointer
}

/// Builds outcomes from parallel time/event arrays already checked non-null.
unsafe fn outcomes_from(times: *const f64, events: *const u8, n: usize) -> Vec<SurvivalOutcome> {
    let times = std::slice::from_raw_parts(times, n);
    let events = std::slice::from_raw_parts(events, n);
    times
        .iter()
        .zip(events)
        .map(|(&t, &e)| SurvivalOutcome::new(t, e != 0))
        .collect()
}

/// Builds a feature table with columns named x1..xN from a row-major array.
fn table_from(values: &[f64], n_rows: usize, n_cols: usize) -> Result<FeatureTable, Error> {
    let names: Vec<String> = (1..=n_cols).map(|j| format!("x{j}")).collect();
    let columns: Vec<Vec<f64>> = (0..n_cols)
        .map(|j| (0..n_rows).map(|i| values[i * n_cols + j]).collect())
        .collect();
    FeatureTable::new(names, columns)
}

unsafe fn path_from<'a>(ptr: *const c_char, name: &str) -> Result<&'a Path, SurvkitStatus> {
    if ptr.is_null() {
        return Err(null_arg(name));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error(&format!("argument '{name}' is not valid UTF-8"));
            Err(SurvkitStatus::InvalidInput)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn survkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn survkit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque Kaplan-Meier curve handle.
pub struct SurvkitKm {
    inner: KmCurve,
}

/// Fits a Kaplan-Meier curve. `events[i]` nonzero means subject `i` had the
/// event at `times[i]`; zero means censored then. On success writes a new
/// handle to `out`.
///
/// # Safety
/// `times` and `events` must point to `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn survkit_km_fit(
    times: *const f64,
    events: *const u8,
    n: usize,
    out: *mut *mut SurvkitKm,
) -> SurvkitStatus {
    if out.is_null() {
        return null_arg("out");
    }
    if times.is_null() {
        return null_arg("times");
    }
    if events.is_null() {
        return null_arg("events");
    }
    let outcomes = outcomes_from(times, events, n);
    match kaplan_meier(&outcomes) {
        Ok(curve) => {
            *out = Box::into_raw(Box::new(SurvkitKm { inner: curve }));
            SurvkitStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of distinct event times in the curve, which is the length of
/// every per-step array.
///
/// # Safety
/// `km` must be a live handle from `survkit_km_fit` (or null, returning 0).
#[no_mangle]
pub unsafe extern "C" fn survkit_km_len(km: *const SurvkitKm) -> usize {
    if km.is_null() {
        return 0;
    }
    (*km).inner.times.len()
}

/// Copies curve steps into caller buffers. Each output pointer may be null
/// to skip that column; non-null buffers need `survkit_km_len` elements.
///
/// # Safety
/// `km` must be a live handle; non-null buffers must have the capacity
/// stated above.
#[no_mangle]
pub unsafe extern "C" fn survkit_km_copy(
    km: *const SurvkitKm,
    times: *mut f64,
    survival: *mut f64,
    ci_lower: *mut f64,
    ci_upper: *mut f64,
) -> SurvkitStatus {
    if km.is_null() {
        return null_arg("km");
    }
    let curve = &(*km).inner;
    let n = curve.times.len();
    if !times.is_null() {
        std::slice::from_raw_parts_mut(times, n).copy_from_slice(&curve.times);
    }
    if !survival.is_null() {
        std::slice::from_raw_parts_mut(survival, n).copy_from_slice(&curve.survival);
    }
    if !ci_lower.is_null() {
        std::slice::from_raw_parts_mut(ci_lower, n).copy_from_slice(&curve.ci_lower);
    }
    if !ci_upper.is_null() {
        std::slice::from_raw_parts_mut(ci_upper, n).copy_from_slice(&curve.ci_upper);
    }
    SurvkitStatus::Ok
}

/// Writes the median survival time, or NaN when the curve never reaches
/// one half.
///
/// # Safety
/// `km` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn survkit_km_median(km: *const SurvkitKm, out: *mut f64) -> SurvkitStatus {
    if km.is_null() {
        return null_arg("km");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*km).inner.median().unwrap_or(f64::NAN);
    SurvkitStatus::Ok
}

/// Frees a Kaplan-Meier handle. Null is a no-op.
///
/// # Safety
/// `km` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn survkit_km_free(km: *mut SurvkitKm) {
    if !km.is_null() {
        drop(Box::from_raw(km));
    }
}

/// Two-sample log-rank test. `groups[i]` is 0 or 1. Writes the chi-squared
/// statistic and its p-value.
///
/// # Safety
/// `times`, `events`, `groups` must point to `n` elements; the two output
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn survkit_logrank(
    times: *const f64,
    events: *const u8,
    groups: *const u8,
    n: usize,
    out_statistic: *mut f64,
    out_p_value: *mut f64,
) -> SurvkitStatus {
    if times.is_null() {
        return null_arg("times");
    }
    if events.is_null() {
        return null_arg("events");
    }
    if groups.is_null() {
        return null_arg("groups");
    }
    if out_statistic.is_null() {
        return null_arg("out_statistic");
    }
    if out_p_value.is_null() {
        return null_arg("out_p_value");
    }
    let outcomes = outcomes_from(times, events, n);
    let groups = std::slice::from_raw_parts(groups, n);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (outcome, &g) in outcomes.iter().zip(groups) {
        if g == 0 {
            a.push(*outcome);
        } else {
            b.push(*outcome);
        }
    }
    match logrank_two_sample(&a, &b) {
        Ok(result) => {
            *out_statistic = result.statistic;
            *out_p_value = result.p_value;
            SurvkitStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Harrell's concordance index of a risk score.
///
/// # Safety
/// `risks`, `times`, `events` must point to `n` elements; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn survkit_concordance(
    risks: *const f64,
    times: *const f64,
    events: *const u8,
    n: usize,
    out: *mut f64,
) -> SurvkitStatus {
    if risks.is_null() {
        return null_arg("risks");
    }
    if times.is_null() {
        return null_arg("times");
    }
    if events.is_null() {
        return null_arg("events");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let risks = std::slice::from_raw_parts(risks, n);
    let outcomes = outcomes_from(times, events, n);
    match concordance_index(risks, &outcomes) {
        Ok(value) => {
            *out = value;
            SurvkitStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Opaque fitted Cox model handle.
pub struct SurvkitCox {
    inner: CoxFit,
    n_inputs: usize,
}

/// Fits a Cox proportional-hazards model on a row-major feature matrix
/// (`n_rows` by `n_cols`); columns are standardized internally. On success
/// writes a new handle to `out`.
///
/// # Safety
/// `values` must point to `n_rows * n_cols` elements; `times` and `events`
/// to `n_rows` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn survkit_cox_fit(
    values: *const f64,
    n_rows: usize,
    n_cols: usize,
    times: *const f64,
    events: *const u8,
    out: *mut *mut SurvkitCox,
) -> SurvkitStatus {
    if out.is_null() {
        return null_arg("out");
    }
    if values.is_null() {
        return null_arg("values");
    }
    if times.is_null() {
        return null_arg("times");
    }
    if events.is_null() {
        return null_arg("events");
    }
    let values = std::slice::from_raw_parts(values, n_rows * n_cols);
    let table = match table_from(values, n_rows, n_cols) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let outcomes = outcomes_from(times, events, n_rows);
    match fit_cox(&table, &outcomes, CoxOptions::default()) {
        Ok(fit) => {
            *out = Box::into_raw(Box::new(SurvkitCox {
                inner: fit,
                n_inputs: n_cols,
            }));
            SurvkitStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of fitted coefficients.
///
/// # Safety
/// `fit` must be a live handle from `survkit_cox_fit` (or null, returning 0).
#[no_mangle]
pub unsafe extern "C" fn survkit_cox_n_features(fit: *const SurvkitCox) -> usize {
    if fit.is_null() {
        return 0;
    }
    (*fit).inner.beta.len()
}

/// Copies fitted quantities into caller buffers of `survkit_cox_n_features`
/// elements each. Any output pointer may be null to skip it.
///
/// # Safety
/// `fit` must be a live handle; non-null buffers must have the capacity
/// stated above.
#[no_mangle]
pub unsafe extern "C" fn survkit_cox_copy(
    fit: *const SurvkitCox,
    coefficients: *mut f64,
    hazard_ratios: *mut f64,
    p_values: *mut f64,
) -> SurvkitStatus {
    if fit.is_null() {
        return null_arg("fit");
    }
    let fit = &(*fit).inner;
    let n = fit.beta.len();
    if !coefficients.is_null() {
        std::slice::from_raw_parts_mut(coefficients, n).copy_from_slice(&fit.beta);
    }
    if !hazard_ratios.is_null() {
        std::slice::from_raw_parts_mut(hazard_ratios, n).copy_from_slice(&fit.hazard_ratio);
    }
    if !p_values.is_null() {
        std::slice::from_raw_parts_mut(p_values, n).copy_from_slice(&fit.p_value);
    }
    SurvkitStatus::Ok
}

/// Predicts linear risk scores for a row-major matrix with the same column
/// layout the model was fitted on; writes `n_rows` values to `out_risks`.
///
/// # Safety
/// `values` must point to `n_rows * n_cols` elements and `out_risks` to
/// `n_rows` elements.
#[no_mangle]
pub unsafe extern "C" fn survkit_cox_predict(
    fit: *const SurvkitCox,
    values: *const f64,
    n_rows: usize,
    n_cols: usize,
    out_risks: *mut f64,
) -> SurvkitStatus {
    if fit.is_null() {
        return null_arg("fit");
    }
    if values.is_null() {
        return null_arg("values");
    }
    if out_risks.is_null() {
        return null_arg("out_risks");
    }
    if n_cols != (*fit).n_inputs {
        set_error(&format!(
            "model was fitted on {} columns, got {}",
            (*fit).n_inputs,
            n_cols
        ));
        return SurvkitStatus::InvalidInput;
    }
    let values = std::slice::from_raw_parts(values, n_rows * n_cols);
    let table = match table_from(values, n_rows, n_cols) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    match predict_risk(&(*fit).inner, &table) {
        Ok(risks) => {
            std::slice::from_raw_parts_mut(out_risks, n_rows).copy_from_slice(&risks);
            SurvkitStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Frees a Cox handle. Null is a no-op.
///
/// # Safety
/// `fit` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn survkit_cox_free(fit: *mut SurvkitCox) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Runs the full pipeline: `manifest_path` names a dataset manifest (TOML),
/// `config_path` an optional pipeline config (null for defaults), and
/// `out_dir` the report directory, created if absent.
///
/// # Safety
/// Paths must be NUL-terminated strings; `config_path` may be null.
#[no_mangle]
pub unsafe extern "C" fn survkit_pipeline_run(
    manifest_path: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
) -> SurvkitStatus {
    let manifest_path = match path_from(manifest_path, "manifest_path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    let out_dir = match path_from(out_dir, "out_dir") {
        Ok(p) => p,
        Err(status) => return status,
    };
    let manifest = match survkit::dataset::load_manifest(manifest_path) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let config = if config_path.is_null() {
        PipelineConfig::default()
    } else {
        let path = match path_from(config_path, "config_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match PipelineConfig::from_path(path) {
            Ok(c) => c,
            Err(e) => return fail(e),
        }
    };
    match run_pipeline(&manifest, &config, out_dir) {
        Ok(_) => SurvkitStatus::Ok,
        Err(e) => fail(e),
    }
}
