//! C ABI over the `cgir` retrieval engine.
//!
//! Every fallible call returns a [`CgirStatus`]; on failure the message is
//! available from [`cgir_last_error`] on the same thread. Strings returned
//! through `char **` out-parameters are owned by the caller and must be
//! released with [`cgir_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cgir::engine::{Engine, RetrieveRequest};
use cgir::metrics::independence_level;
use cgir::Error;

/// Opaque handle to a loaded checkpoint.
pub struct CgirModel {
    engine: Engine,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgirStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Bad request or configuration, including malformed request JSON.
    Usage = 3,
    NotFound = 4,
    /// The attribute exists but none of its words had a vector.
    DroppedAttribute = 5,
    /// Unreadable or inconsistent input files.
    Data = 6,
    Checkpoint = 7,
    Numerical = 8,
    Panic = 9,
}

impl From<&Error> for CgirStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Usage(_) | Error::Config(_) => CgirStatus::Usage,
            Error::NotFound { .. } => CgirStatus::NotFound,
            Error::DroppedAttribute(_) => CgirStatus::DroppedAttribute,
            Error::Checkpoint(_) => CgirStatus::Checkpoint,
            Error::Parse { .. } | Error::Io { .. } | Error::Data(_) => CgirStatus::Data,
            Error::Shape { .. } | Error::NonFinite { .. } | Error::Numerical { .. } => CgirStatus::Numerical,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: CgirStatus, msg: impl Into<String>) -> CgirStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> CgirStatus) -> CgirStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CgirStatus::Panic, "internal panic"),
    }
}

fn from_error(e: Error) -> CgirStatus {
    fail(CgirStatus::from(&e), e.to_string())
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, CgirStatus> {
    if p.is_null() {
        return Err(fail(CgirStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CgirStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).expect("JSON contains no NUL bytes").into_raw()
}

/// Loads the checkpoint directory at `checkpoint`. `oracle` may be null, an
/// oracle file, or a data directory holding `oracle.tsv`; with an oracle,
/// retrieval entries carry relevance maps.
///
/// # Safety
/// String arguments are null or NUL-terminated; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cgir_model_open(
    checkpoint: *const c_char,
    oracle: *const c_char,
    out: *mut *mut CgirModel,
) -> CgirStatus {
    guard(|| {
        if out.is_null() {
            return fail(CgirStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let checkpoint = match read_str(checkpoint, "checkpoint") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let oracle = if oracle.is_null() {
            None
        } else {
            match read_str(oracle, "oracle") {
                Ok(s) => Some(Path::new(s)),
                Err(s) => return s,
            }
        };
        match Engine::open(Path::new(checkpoint), oracle) {
            Ok(engine) => {
                *out = Box::into_raw(Box::new(CgirModel { engine }));
                CgirStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle from [`cgir_model_open`]. Null is ignored.
///
/// # Safety
/// `model` is null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn cgir_model_free(model: *mut CgirModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of items, or 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgir_model_num_items(model: *const CgirModel) -> usize {
    model.as_ref().map_or(0, |m| m.engine.retriever().num_items())
}

/// Number of attributes, or 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgir_model_num_attributes(model: *const CgirModel) -> usize {
    model.as_ref().map_or(0, |m| m.engine.retriever().num_attributes())
}

/// Latent dimension, or 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgir_model_latent_dim(model: *const CgirModel) -> usize {
    model.as_ref().map_or(0, |m| m.engine.retriever().latent_dim())
}

/// Writes the external id of item `index` to `*out`.
///
/// # Safety
/// `model` is null or a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cgir_model_item_id(model: *const CgirModel, index: usize, out: *mut *mut c_char) -> CgirStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(CgirStatus::NullArgument, "model or out is null");
        };
        *out = ptr::null_mut();
        if index >= m.engine.num_items() {
            return fail(
                CgirStatus::NotFound,
                format!("item index {index} out of range 0..{}", m.engine.num_items()),
            );
        }
        *out = to_c_string(m.engine.bundle().items.id(index).to_string());
        CgirStatus::Ok
    })
}

/// Runs a retrieval. `request_json` has the service body shape
/// `{"item_id", "attribute", "action", "gamma_start", "gamma_step", "steps", "top_k"}`;
/// `*out_json` receives the gradient sequence JSON.
///
/// # Safety
/// `model` is null or a live handle; `request_json` is null or NUL-terminated;
/// `out_json` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cgir_retrieve_json(
    model: *const CgirModel,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CgirStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out_json.is_null()) else {
            return fail(CgirStatus::NullArgument, "model or out_json is null");
        };
        *out_json = ptr::null_mut();
        let text = match read_str(request_json, "request_json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let req: RetrieveRequest = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => return fail(CgirStatus::Usage, format!("malformed request: {e}")),
        };
        match m.engine.retrieve(&req) {
            Ok(seq) => {
                *out_json = to_c_string(serde_json::to_string(&seq).expect("serializable"));
                CgirStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Independence level of the item table.
///
/// # Safety
/// `model` is null or a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cgir_independence_level(model: *const CgirModel, out: *mut f64) -> CgirStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(CgirStatus::NullArgument, "model or out is null");
        };
        match independence_level(m.engine.retriever().item_table()) {
            Ok(v) => {
                *out = v;
                CgirStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a string from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn cgir_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cgir_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
