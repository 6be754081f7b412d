//! C ABI over `spider`.
//!
//! Mechanisms live behind an opaque `SpiderMechanism*` built from the JSON
//! input document. Every call returns a `SpiderStatus`; on failure the
//! message is kept per thread and read with `spider_last_error`. Strings
//! handed out by the library are freed with `spider_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spider::report::{self, Command, Options, PotentialKind, RunError};
use spider::{MechanismDocument, Point};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpiderStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InputError = 3,
    GenericityViolation = 4,
    AnalysisFailed = 5,
    Panic = 6,
}

/// Opaque to C.
pub struct SpiderMechanism {
    doc: MechanismDocument,
    mech: spider::SpiderMechanism,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: SpiderStatus, msg: impl Into<String>) -> SpiderStatus {
    set_error(msg);
    status
}

fn from_run(e: RunError) -> SpiderStatus {
    let status = match e {
        RunError::Input(_) => SpiderStatus::InputError,
        RunError::Genericity(_) => SpiderStatus::GenericityViolation,
        RunError::Analysis(_) => SpiderStatus::AnalysisFailed,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SpiderStatus) -> SpiderStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SpiderStatus::Panic, "panic inside spider"))
}

fn put_string(s: String, out: *mut *mut c_char) -> SpiderStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: caller checked `out` for null.
            unsafe { *out = c.into_raw() };
            SpiderStatus::Ok
        }
        Err(_) => fail(SpiderStatus::AnalysisFailed, "report contains a NUL byte"),
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn spider_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Build a mechanism from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be NULL or a valid C string; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn spider_mechanism_from_json(json: *const c_char, out: *mut *mut SpiderMechanism) -> SpiderStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(SpiderStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(SpiderStatus::InvalidUtf8, "document is not UTF-8");
        };
        match report::load(text, &Options::default()) {
            Ok((doc, mech)) => {
                *out = Box::into_raw(Box::new(SpiderMechanism { doc, mech }));
                SpiderStatus::Ok
            }
            Err(e) => from_run(e),
        }
    })
}

/// # Safety
/// `m` must be NULL or come from `spider_mechanism_from_json`, freed once.
#[no_mangle]
pub unsafe extern "C" fn spider_mechanism_free(m: *mut SpiderMechanism) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Dimension of the configuration space.
///
/// # Safety
/// `m` must be a live handle or NULL; `out` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn spider_mechanism_dim(m: *const SpiderMechanism, out: *mut usize) -> SpiderStatus {
    guard(|| {
        let (Some(m), false) = (m.as_ref(), out.is_null()) else {
            return fail(SpiderStatus::NullPointer, "null argument");
        };
        *out = m.mech.dim();
        SpiderStatus::Ok
    })
}

/// Euler characteristic of the configuration space, summed over the
/// strata of the work space.
///
/// # Safety
/// `m` must be a live handle or NULL; `out` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn spider_euler(m: *const SpiderMechanism, out: *mut i64) -> SpiderStatus {
    guard(|| {
        let (Some(m), false) = (m.as_ref(), out.is_null()) else {
            return fail(SpiderStatus::NullPointer, "null argument");
        };
        match spider::workspace::euler_via_strata(&m.mech) {
            Ok(c) => {
                *out = c.euler;
                SpiderStatus::Ok
            }
            Err(e) => from_run(e.into()),
        }
    })
}

/// Critical components of `|x - z|^2` as a JSON report. Free the string
/// with `spider_string_free`.
///
/// # Safety
/// `m` must be a live handle or NULL; `out` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn spider_critical_json(m: *const SpiderMechanism, zx: f64, zy: f64, certified: bool, out: *mut *mut c_char) -> SpiderStatus {
    guard(|| {
        let (Some(m), false) = (m.as_ref(), out.is_null()) else {
            return fail(SpiderStatus::NullPointer, "null argument");
        };
        let opts = Options { potential: PotentialKind::Sqdist, z: Some(Point::new(zx, zy)), certified, ..Default::default() };
        let mut doc = m.doc.clone();
        doc.z = Some([zx, zy]);
        match report::run(Command::Critical, &doc, &m.mech, &opts) {
            Ok((rep, _)) => put_string(rep.to_json(), out),
            Err(e) => from_run(e),
        }
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn spider_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
