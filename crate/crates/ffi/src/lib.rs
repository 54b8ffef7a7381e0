//! C ABI for the localization engine.
//!
//! Handles are opaque pointers owned by this library; every constructor has
//! a matching `_free`. Functions return a `tileloc_status` code; on any
//! non-OK status, `tileloc_last_error()` holds a message for the calling
//! thread until its next failing call. No Rust panic crosses the boundary.
//!
//! The C header (`include/tileloc.h`) is generated by cbindgen at build
//! time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tileloc::dataset::{Dataset, Fingerprint};
use tileloc::error::Error;
use tileloc::models::{self, DataRef, LearnerSpec, PositionModel};
use tileloc::synthworld::Environment;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)]
pub enum tileloc_status {
    TILELOC_OK = 0,
    TILELOC_NULL_ARGUMENT = 1,
    TILELOC_INVALID_ARGUMENT = 2,
    TILELOC_DATA_ERROR = 3,
    TILELOC_TRAIN_ERROR = 4,
    TILELOC_PREDICT_ERROR = 5,
    TILELOC_IO_ERROR = 6,
    TILELOC_INTERNAL_ERROR = 7,
}

use tileloc_status::*;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: String) {
    let safe = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = safe);
}

fn status_of(err: &Error) -> tileloc_status {
    match err {
        Error::Config(_) => TILELOC_INVALID_ARGUMENT,
        Error::Io { .. } => TILELOC_IO_ERROR,
        Error::Data(_) | Error::Schema(_) | Error::Serde(_) => TILELOC_DATA_ERROR,
        Error::Train(_) => TILELOC_TRAIN_ERROR,
        Error::Predict(_) => TILELOC_PREDICT_ERROR,
    }
}

fn fail(err: Error) -> tileloc_status {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Run a body that may panic; map panics to TILELOC_INTERNAL_ERROR.
fn guarded(body: impl FnOnce() -> tileloc_status) -> tileloc_status {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".to_string());
            TILELOC_INTERNAL_ERROR
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, tileloc_status> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(TILELOC_NULL_ARGUMENT);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        TILELOC_INVALID_ARGUMENT
    })
}

/// Survey dataset handle.
#[allow(non_camel_case_types)]
pub struct tileloc_dataset {
    dataset: Dataset,
    source: Option<DataRef>,
}

/// Trained position-model handle.
#[allow(non_camel_case_types)]
pub struct tileloc_model {
    model: PositionModel,
    spec: LearnerSpec,
    seed: u64,
    data: Option<DataRef>,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tileloc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the calling thread's most recent failure. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tileloc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a dataset CSV (honoring its schema sidecar) into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tileloc_dataset_load(
    path: *const c_char,
    out: *mut *mut tileloc_dataset,
) -> tileloc_status {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer".into());
            return TILELOC_NULL_ARGUMENT;
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Dataset::load_csv(Path::new(path)) {
            Ok(dataset) => {
                let source = Some(DataRef::for_dataset(Path::new(path), &dataset));
                *out = Box::into_raw(Box::new(tileloc_dataset { dataset, source }));
                TILELOC_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Survey a radio-environment JSON file into an in-memory dataset.
///
/// # Safety
/// `env_path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tileloc_dataset_generate(
    env_path: *const c_char,
    spacing_tiles: u32,
    seed: u64,
    out: *mut *mut tileloc_dataset,
) -> tileloc_status {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer".into());
            return TILELOC_NULL_ARGUMENT;
        }
        let path = match cstr_arg(env_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let result = Environment::load_json(Path::new(path))
            .and_then(|env| env.generate_dataset(spacing_tiles, seed));
        match result {
            Ok(dataset) => {
                *out = Box::into_raw(Box::new(tileloc_dataset { dataset, source: None }));
                TILELOC_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of labeled points; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn tileloc_dataset_len(dataset: *const tileloc_dataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).dataset.len()
}

/// Number of attribute columns; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn tileloc_dataset_attributes(dataset: *const tileloc_dataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).dataset.schema().len()
}

/// Release a dataset handle (null is a no-op).
///
/// # Safety
/// `dataset` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tileloc_dataset_free(dataset: *mut tileloc_dataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Train a learner on a dataset. `learner` names the family as in the CLI:
/// `kstar`, `knn`, `rbf`, `linear`, `zeror`, `forest`, `vote:<a>+<b>`,
/// `hybrid`.
///
/// # Safety
/// `dataset` must be a live handle; `learner` a NUL-terminated string;
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tileloc_train(
    dataset: *const tileloc_dataset,
    learner: *const c_char,
    seed: u64,
    out: *mut *mut tileloc_model,
) -> tileloc_status {
    guarded(|| {
        if dataset.is_null() || out.is_null() {
            set_error("null handle argument".into());
            return TILELOC_NULL_ARGUMENT;
        }
        let learner = match cstr_arg(learner) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let spec = match LearnerSpec::parse(learner) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let handle = &*dataset;
        match PositionModel::train(&spec, &handle.dataset, seed) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(tileloc_model {
                    model,
                    spec,
                    seed,
                    data: handle.source.clone(),
                }));
                TILELOC_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Load a persisted model document (instance models re-derive their view
/// from the referenced training data, verifying its content hash).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tileloc_model_load(
    path: *const c_char,
    out: *mut *mut tileloc_model,
) -> tileloc_status {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer".into());
            return TILELOC_NULL_ARGUMENT;
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match models::load_model(Path::new(path)) {
            Ok((model, spec)) => {
                *out = Box::into_raw(Box::new(tileloc_model { model, spec, seed: 0, data: None }));
                TILELOC_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Persist a model. Instance-based families need the training dataset to
/// have been loaded from a file (the document stores the reference).
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tileloc_model_save(
    model: *const tileloc_model,
    path: *const c_char,
) -> tileloc_status {
    guarded(|| {
        if model.is_null() {
            set_error("null model handle".into());
            return TILELOC_NULL_ARGUMENT;
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let handle = &*model;
        match models::save_model(
            &handle.model,
            &handle.spec,
            handle.seed,
            handle.data.clone(),
            Path::new(path),
        ) {
            Ok(()) => TILELOC_OK,
            Err(e) => fail(e),
        }
    })
}

/// Predict a position fix from one fingerprint.
///
/// `values` holds `len` attribute readings aligned to the training schema;
/// `missing` (optional, may be null) marks out-of-range radios with
/// non-zero bytes — such entries must hold the -100 dBm sentinel in
/// `values`. Outputs are tile coordinates plus the number of candidate
/// instances examined.
///
/// # Safety
/// `model` must be a live handle; `values` (and `missing` when non-null)
/// must point to `len` readable elements; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tileloc_predict(
    model: *const tileloc_model,
    values: *const f64,
    missing: *const u8,
    len: usize,
    out_x: *mut f64,
    out_y: *mut f64,
    out_comparisons: *mut u64,
) -> tileloc_status {
    guarded(|| {
        if model.is_null() || values.is_null() || out_x.is_null() || out_y.is_null() {
            set_error("null argument".into());
            return TILELOC_NULL_ARGUMENT;
        }
        let values = std::slice::from_raw_parts(values, len).to_vec();
        let mask = if missing.is_null() {
            vec![false; len]
        } else {
            std::slice::from_raw_parts(missing, len).iter().map(|&m| m != 0).collect()
        };
        let fingerprint = match Fingerprint::new(values, mask) {
            Ok(fp) => fp,
            Err(e) => return fail(e),
        };
        match (*model).model.predict(&fingerprint) {
            Ok(fix) => {
                *out_x = fix.x;
                *out_y = fix.y;
                if !out_comparisons.is_null() {
                    *out_comparisons = fix.comparisons;
                }
                TILELOC_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a model handle (null is a no-op).
///
/// # Safety
/// `model` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tileloc_model_free(model: *mut tileloc_model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
