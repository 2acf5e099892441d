//! C ABI for the `cfood` detector.
//!
//! Objects are handed out as opaque pointers and must be released with the
//! matching `*_free` function. Every call returns a [`CfoodStatus`]; on
//! failure a message is available from [`cfood_last_error`] until the next
//! call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cfood::{Detector, Error, ErrorKind, FeatureDataset, LinearHead, Method, ScoreConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfoodStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Validation = 4,
    Degenerate = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfoodMethod {
    Nnce = 0,
    Nice = 1,
}

pub struct CfoodDataset(FeatureDataset);
pub struct CfoodHead(LinearHead);
pub struct CfoodDetector(Detector);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut msg = msg.into();
    msg.retain(|c| c != '\0');
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> CfoodStatus {
    match err.kind() {
        ErrorKind::Io => CfoodStatus::Io,
        ErrorKind::Validation => CfoodStatus::Validation,
        ErrorKind::Degenerate => CfoodStatus::Degenerate,
    }
}

struct Fail(CfoodStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CfoodStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(CfoodStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CfoodStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CfoodStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CfoodStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `cfood_*` call on this thread.
#[no_mangle]
pub extern "C" fn cfood_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cfood_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a CFOD file (or a `.json` manifest).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfood_dataset_load(path: *const c_char, out: *mut *mut CfoodDataset) -> CfoodStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let loaded = cfood::manifest::load_any(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(CfoodDataset(loaded.dataset)));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from `cfood_dataset_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfood_dataset_free(ds: *mut CfoodDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Writes the dataset's row, dimension and class counts.
///
/// # Safety
/// `ds` must be a live dataset handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfood_dataset_shape(
    ds: *const CfoodDataset,
    rows: *mut usize,
    dim: *mut usize,
    classes: *mut usize,
) -> CfoodStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        *out_arg(rows, "rows")? = ds.rows();
        *out_arg(dim, "dim")? = ds.dim();
        *out_arg(classes, "classes")? = ds.classes();
        Ok(())
    })
}

/// Copies row `row` into `out` (length `dim`) as f64.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn cfood_dataset_row(
    ds: *const CfoodDataset,
    row: usize,
    out: *mut f64,
    dim: usize,
) -> CfoodStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        if row >= ds.rows() {
            return Err(invalid(format!("row {row} out of range for {} rows", ds.rows())));
        }
        if dim != ds.dim() {
            return Err(invalid(format!("buffer holds {dim} values, rows have {}", ds.dim())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = std::slice::from_raw_parts_mut(out, dim);
        for (d, &s) in dst.iter_mut().zip(ds.row(row)) {
            *d = s as f64;
        }
        Ok(())
    })
}

/// Loads a CFHD linear head.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfood_head_load(path: *const c_char, out: *mut *mut CfoodHead) -> CfoodStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let head = cfood::load_head(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(CfoodHead(head)));
        Ok(())
    })
}

/// # Safety
/// `head` must come from `cfood_head_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfood_head_free(head: *mut CfoodHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Predicted class (lowest index wins ties) for an embedding of length `len`.
///
/// # Safety
/// `head` must be live; `z` must hold `len` doubles; `out_class` writable.
#[no_mangle]
pub unsafe extern "C" fn cfood_head_predict(
    head: *const CfoodHead,
    z: *const f64,
    len: usize,
    out_class: *mut usize,
) -> CfoodStatus {
    guard(|| {
        let head = &ref_arg(head, "head")?.0;
        let z = slice_arg(z, len, "z")?;
        *out_arg(out_class, "out_class")? = head.predict(z)?;
        Ok(())
    })
}

/// Builds a detector over `train` with a copy of `head`.
///
/// `k_classes = 0` scores against all other classes. `normalize` and
/// `average` select the score variant; `filter` drops misclassified
/// training rows from the counterfactual pool.
///
/// # Safety
/// `train` and `head` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfood_detector_new(
    train: *const CfoodDataset,
    head: *const CfoodHead,
    method: CfoodMethod,
    k_classes: usize,
    normalize: bool,
    average: bool,
    filter: bool,
    out: *mut *mut CfoodDetector,
) -> CfoodStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let train = &ref_arg(train, "train")?.0;
        let head = ref_arg(head, "head")?.0.clone();
        let config = ScoreConfig {
            method: match method {
                CfoodMethod::Nnce => Method::Nnce,
                CfoodMethod::Nice => Method::Nice,
            },
            k_classes: (k_classes > 0).then_some(k_classes),
            normalize,
            average,
        };
        let det = Detector::fit(train, head, filter, config)?;
        *out = Box::into_raw(Box::new(CfoodDetector(det)));
        Ok(())
    })
}

/// # Safety
/// `det` must come from `cfood_detector_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfood_detector_free(det: *mut CfoodDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Scores one embedding. `logits` may be null (length `logits_len` ignored);
/// the head's own logits are then used for top-k target selection.
///
/// # Safety
/// `det` must be live; `z` must hold `len` doubles; `logits`, when non-null,
/// must hold `logits_len` doubles; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfood_detector_score(
    det: *const CfoodDetector,
    z: *const f64,
    len: usize,
    logits: *const f64,
    logits_len: usize,
    out_score: *mut f64,
    out_class: *mut usize,
) -> CfoodStatus {
    guard(|| {
        let det = &ref_arg(det, "detector")?.0;
        let z = slice_arg(z, len, "z")?;
        let logits = if logits.is_null() {
            None
        } else {
            Some(std::slice::from_raw_parts(logits, logits_len))
        };
        let scored = det.score(z, logits)?;
        *out_arg(out_score, "out_score")? = scored.score;
        if !out_class.is_null() {
            *out_class = scored.predicted_class;
        }
        Ok(())
    })
}

/// Scores every row of `ds` into `out_scores` (length `rows`). `threads = 0`
/// uses all cores; results do not depend on the thread count.
///
/// # Safety
/// `det`, `ds` must be live; `out_scores` must hold `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn cfood_detector_score_dataset(
    det: *const CfoodDetector,
    ds: *const CfoodDataset,
    threads: usize,
    out_scores: *mut f64,
    rows: usize,
) -> CfoodStatus {
    guard(|| {
        let det = &ref_arg(det, "detector")?.0;
        let ds = &ref_arg(ds, "dataset")?.0;
        if rows != ds.rows() {
            return Err(invalid(format!("buffer holds {rows} scores, dataset has {}", ds.rows())));
        }
        if out_scores.is_null() {
            return Err(null("out_scores"));
        }
        let scored = det.score_batch(ds, (threads > 0).then_some(threads))?;
        let dst = std::slice::from_raw_parts_mut(out_scores, rows);
        for (d, s) in dst.iter_mut().zip(scored) {
            *d = s.score;
        }
        Ok(())
    })
}

/// Area under the ROC curve, ID as the positive class.
///
/// # Safety
/// `id`/`ood` must hold `n_id`/`n_ood` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfood_auroc(
    id: *const f64,
    n_id: usize,
    ood: *const f64,
    n_ood: usize,
    out: *mut f64,
) -> CfoodStatus {
    guard(|| {
        let id = slice_arg(id, n_id, "id")?;
        let ood = slice_arg(ood, n_ood, "ood")?;
        *out_arg(out, "out")? = cfood::auroc(id, ood)?;
        Ok(())
    })
}

/// False-positive rate at 95% true-positive rate, and the threshold used.
///
/// # Safety
/// `id`/`ood` must hold `n_id`/`n_ood` doubles; out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cfood_fpr95(
    id: *const f64,
    n_id: usize,
    ood: *const f64,
    n_ood: usize,
    out_fpr: *mut f64,
    out_tau: *mut f64,
) -> CfoodStatus {
    guard(|| {
        let id = slice_arg(id, n_id, "id")?;
        let ood = slice_arg(ood, n_ood, "ood")?;
        let (fpr, tau) = cfood::fpr_at_95_tpr(id, ood)?;
        *out_arg(out_fpr, "out_fpr")? = fpr;
        if !out_tau.is_null() {
            *out_tau = tau;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        let mut out = ptr::null_mut();
        let s = unsafe { cfood_dataset_load(ptr::null(), &mut out) };
        assert_eq!(s, CfoodStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(cfood_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "path is null");
        assert!(out.is_null());
    }

    #[test]
    fn metrics_through_abi() {
        let id: Vec<f64> = (1..=100).map(f64::from).collect();
        let ood = [0.0, 6.0, 7.0, 8.0];
        let (mut fpr, mut tau, mut auc) = (0.0, 0.0, 0.0);
        unsafe {
            assert_eq!(cfood_fpr95(id.as_ptr(), 100, ood.as_ptr(), 4, &mut fpr, &mut tau), CfoodStatus::Ok);
            assert_eq!(cfood_auroc(id.as_ptr(), 100, ood.as_ptr(), 4, &mut auc), CfoodStatus::Ok);
        }
        assert_eq!((fpr, tau), (0.75, 6.0));
        assert!(auc > 0.9);
        let s = unsafe { cfood_auroc(id.as_ptr(), 0, ood.as_ptr(), 4, &mut auc) };
        assert_eq!(s, CfoodStatus::Validation);
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(cfood_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
