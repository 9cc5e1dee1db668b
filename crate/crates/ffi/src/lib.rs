//! C ABI over the selective inference engine.
//!
//! Every fallible function returns an `SfsdaStatus` code and writes results
//! through out-pointers. On failure a description is available from
//! `sfsda_last_error_message` on the same thread until the next call.
//! Handles are opaque and must be released with their matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sfsda::inference::{infer_feature, observe, truncated_two_sided_p_raw, FeatureInference};
use sfsda::nalgebra::{DMatrix, DVector};
use sfsda::{load_csv, Error, PenaltyConfig, TruncationRegion, TwoDomainDataset};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfsdaStatus {
    Ok = 0,
    InvalidArgument = 1,
    IoError = 2,
    NumericalError = 3,
    Panic = 4,
}

/// Source and target samples with known noise covariance.
pub struct SfsdaDataset {
    inner: TwoDomainDataset,
}

/// Selective inference results, one entry per selected feature.
pub struct SfsdaReport {
    entries: Vec<FeatureInference>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(error: &Error) -> SfsdaStatus {
    match error {
        Error::Io { .. } | Error::Parse { .. } => SfsdaStatus::IoError,
        e if e.is_numerical() => SfsdaStatus::NumericalError,
        _ => SfsdaStatus::InvalidArgument,
    }
}

fn invalid(message: &str) -> SfsdaStatus {
    set_error(message);
    SfsdaStatus::InvalidArgument
}

/// Runs `body`, converting engine errors and panics into status codes.
fn guarded(body: impl FnOnce() -> Result<(), Error>) -> SfsdaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SfsdaStatus::Ok,
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(&format!("internal panic: {msg}"));
            SfsdaStatus::Panic
        }
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize) -> Option<&'a [f64]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn path_arg<'a>(s: *const c_char) -> Option<&'a Path> {
    if s.is_null() {
        return None;
    }
    CStr::from_ptr(s).to_str().ok().map(Path::new)
}

/// Builds a dataset from row-major feature matrices (`n_source x n_features` and
/// `n_target x n_features`) and responses, with noise covariance `noise_sd^2 I`.
///
/// # Safety
/// Array pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfsda_dataset_new(
    source_features: *const f64,
    source_response: *const f64,
    n_source: usize,
    target_features: *const f64,
    target_response: *const f64,
    n_target: usize,
    n_features: usize,
    noise_sd: f64,
    out: *mut *mut SfsdaDataset,
) -> SfsdaStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    *out = ptr::null_mut();
    let (Some(xs), Some(ys), Some(xt), Some(yt)) = (
        slice(source_features, n_source * n_features),
        slice(source_response, n_source),
        slice(target_features, n_target * n_features),
        slice(target_response, n_target),
    ) else {
        return invalid("null data pointer");
    };
    guarded(|| {
        let inner = TwoDomainDataset::with_isotropic_noise(
            DMatrix::from_row_slice(n_source, n_features, xs),
            DVector::from_column_slice(ys),
            DMatrix::from_row_slice(n_target, n_features, xt),
            DVector::from_column_slice(yt),
            noise_sd,
        )?;
        *out = Box::into_raw(Box::new(SfsdaDataset { inner }));
        Ok(())
    })
}

/// Loads a dataset from two CSV files with header `x1,...,xp,y`.
///
/// # Safety
/// Paths must be NUL-terminated UTF-8 strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfsda_dataset_from_csv(
    source_path: *const c_char,
    target_path: *const c_char,
    noise_sd: f64,
    out: *mut *mut SfsdaDataset,
) -> SfsdaStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    *out = ptr::null_mut();
    let (Some(source), Some(target)) = (path_arg(source_path), path_arg(target_path)) else {
        return invalid("path is null or not UTF-8");
    };
    guarded(|| {
        let inner = load_csv(source, target, noise_sd)?;
        *out = Box::into_raw(Box::new(SfsdaDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from a constructor above and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sfsda_dataset_free(dataset: *mut SfsdaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Selects features with the elastic net (`l2_weight = 0` for the Lasso) after
/// domain adaptation and computes a selective p-value for each.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfsda_infer(
    dataset: *const SfsdaDataset,
    l1_weight: f64,
    l2_weight: f64,
    out: *mut *mut SfsdaReport,
) -> SfsdaStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    *out = ptr::null_mut();
    let Some(dataset) = dataset.as_ref() else {
        return invalid("dataset handle is null");
    };
    guarded(|| {
        let penalty = PenaltyConfig::elastic_net(l1_weight, l2_weight);
        if !(l1_weight > 0.0) {
            return Err(Error::InvalidInput("l1 weight must be positive".into()));
        }
        let observed = observe(&dataset.inner, &penalty)?;
        let entries = observed
            .active_set()
            .iter()
            .map(|&j| infer_feature(&dataset.inner, &penalty, &observed, j))
            .collect::<Result<Vec<_>, _>>()?;
        *out = Box::into_raw(Box::new(SfsdaReport { entries }));
        Ok(())
    })
}

/// Number of selected features in the report; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sfsda_report_len(report: *const SfsdaReport) -> usize {
    report.as_ref().map_or(0, |r| r.entries.len())
}

/// Scalar results of entry `index`; any out-pointer may be null to skip it.
///
/// # Safety
/// `report` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfsda_report_feature(
    report: *const SfsdaReport,
    index: usize,
    feature: *mut usize,
    statistic: *mut f64,
    statistic_sd: *mut f64,
    p_value: *mut f64,
) -> SfsdaStatus {
    clear_error();
    let Some(report) = report.as_ref() else {
        return invalid("report handle is null");
    };
    let Some(entry) = report.entries.get(index) else {
        return invalid(&format!("index {index} out of range for {} entries", report.entries.len()));
    };
    if !feature.is_null() {
        *feature = entry.feature;
    }
    if !statistic.is_null() {
        *statistic = entry.statistic;
    }
    if !statistic_sd.is_null() {
        *statistic_sd = entry.statistic_sd;
    }
    if !p_value.is_null() {
        *p_value = entry.p_value;
    }
    SfsdaStatus::Ok
}

/// Copies up to `capacity` intervals of entry `index` into `buffer` as
/// `lo0, hi0, lo1, hi1, ...` and stores the total interval count in `count`.
/// Passing `capacity = 0` queries the count only.
///
/// # Safety
/// `buffer` must hold `2 * capacity` doubles; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfsda_report_intervals(
    report: *const SfsdaReport,
    index: usize,
    buffer: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> SfsdaStatus {
    clear_error();
    let Some(report) = report.as_ref() else {
        return invalid("report handle is null");
    };
    if count.is_null() || (capacity > 0 && buffer.is_null()) {
        return invalid("null output buffer");
    }
    let Some(entry) = report.entries.get(index) else {
        return invalid(&format!("index {index} out of range for {} entries", report.entries.len()));
    };
    let intervals = entry.region.intervals();
    *count = intervals.len();
    for (k, &(lo, hi)) in intervals.iter().take(capacity).enumerate() {
        *buffer.add(2 * k) = lo;
        *buffer.add(2 * k + 1) = hi;
    }
    SfsdaStatus::Ok
}

/// # Safety
/// `report` must come from `sfsda_infer` and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sfsda_report_free(report: *mut SfsdaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Two-sided p-value of `statistic` under `N(0, statistic_sd^2)` truncated to the
/// union of `n_intervals` intervals given as `lo0, hi0, lo1, hi1, ...`.
///
/// # Safety
/// `intervals` must hold `2 * n_intervals` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfsda_truncated_p(
    intervals: *const f64,
    n_intervals: usize,
    statistic_sd: f64,
    statistic: f64,
    out: *mut f64,
) -> SfsdaStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    let Some(flat) = slice(intervals, 2 * n_intervals) else {
        return invalid("intervals pointer is null");
    };
    guarded(|| {
        if flat.chunks(2).any(|c| !(c[0] < c[1])) {
            return Err(Error::InvalidInput("every interval needs lo < hi".into()));
        }
        let region = TruncationRegion::from_intervals(flat.chunks(2).map(|c| (c[0], c[1])), 0.0);
        *out = truncated_two_sided_p_raw(&region, statistic_sd, statistic)?;
        Ok(())
    })
}

/// Message for the most recent failure on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sfsda_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
