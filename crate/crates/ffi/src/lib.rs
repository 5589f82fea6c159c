//! C ABI for the mobigraph library.
//!
//! Graphs travel across the boundary as JSON documents or as opaque
//! `MgGraph` handles. Every fallible function returns an [`MgStatus`];
//! on failure a thread-local message is available via [`mg_last_error`].
//! Strings returned through out-parameters are owned by the caller and
//! must be released with [`mg_string_free`]; handles with
//! [`mg_graph_free`].

use mobigraph::matching::{faq_match, pad_with_null_nodes, MatchConfig};
use mobigraph::{graph_distance, Error, MobilityGraph};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

/// Status code returned by every fallible FFI function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MgStatus {
    /// Success.
    Ok = 0,
    /// A pointer argument was null.
    ErrNullPointer = 1,
    /// Invalid input data or configuration.
    ErrData = 2,
    /// Numerical failure (non-finite values, divergence).
    ErrNumerical = 3,
    /// A string argument was not valid UTF-8.
    ErrUtf8 = 4,
}

/// Opaque handle to a mobility graph.
pub struct MgGraph {
    inner: MobilityGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_from(err: &Error) -> MgStatus {
    set_last_error(&err.to_string());
    match err.exit_code() {
        3 => MgStatus::ErrNumerical,
        _ => MgStatus::ErrData,
    }
}

/// Returns the message for the last error raised on this thread. The
/// pointer stays valid until the next failing call on the same thread; do
/// not free it.
#[no_mangle]
pub extern "C" fn mg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, MgStatus> {
    if ptr.is_null() {
        set_last_error("null pointer argument");
        return Err(MgStatus::ErrNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("argument is not valid UTF-8");
        MgStatus::ErrUtf8
    })
}

fn export_string(s: String, out: *mut *mut c_char) -> MgStatus {
    match CString::new(s.replace('\0', " ")) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            MgStatus::Ok
        }
        Err(_) => {
            set_last_error("string contains an interior NUL");
            MgStatus::ErrData
        }
    }
}

/// Parses a graph JSON document into a new handle.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn mg_graph_from_json(
    json: *const c_char,
    out: *mut *mut MgGraph,
) -> MgStatus {
    if out.is_null() {
        set_last_error("null out-pointer");
        return MgStatus::ErrNullPointer;
    }
    let text = match read_utf8(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match MobilityGraph::from_json(text) {
        Ok(g) => {
            *out = Box::into_raw(Box::new(MgGraph { inner: g }));
            MgStatus::Ok
        }
        Err(e) => status_from(&e),
    }
}

/// Serializes a graph handle back to its JSON document.
///
/// # Safety
/// `graph` must be a live handle from this library and `out_json` a
/// writable pointer slot; the returned string must be freed with
/// `mg_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mg_graph_to_json(
    graph: *const MgGraph,
    out_json: *mut *mut c_char,
) -> MgStatus {
    if graph.is_null() || out_json.is_null() {
        set_last_error("null pointer argument");
        return MgStatus::ErrNullPointer;
    }
    match (*graph).inner.to_json() {
        Ok(s) => export_string(s, out_json),
        Err(e) => status_from(&e),
    }
}

/// Number of nodes in the graph, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mg_graph_node_count(graph: *const MgGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    (*graph).inner.n()
}

/// Frobenius distance between the adjacency matrices of two graphs of
/// equal size.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mg_graph_distance(
    g1: *const MgGraph,
    g2: *const MgGraph,
    out: *mut f64,
) -> MgStatus {
    if g1.is_null() || g2.is_null() || out.is_null() {
        set_last_error("null pointer argument");
        return MgStatus::ErrNullPointer;
    }
    match graph_distance(&(*g1).inner.adjacency, &(*g2).inner.adjacency) {
        Ok(d) => {
            *out = d;
            MgStatus::Ok
        }
        Err(e) => status_from(&e),
    }
}

/// Runs the graph matcher on two handles (padding with null nodes when the
/// sizes differ) and returns the match result as a JSON document.
///
/// # Safety
/// Both handles must be live and `out_json` a writable pointer slot; the
/// returned string must be freed with `mg_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mg_match_json(
    g1: *const MgGraph,
    g2: *const MgGraph,
    lambda: f64,
    restarts: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> MgStatus {
    if g1.is_null() || g2.is_null() || out_json.is_null() {
        set_last_error("null pointer argument");
        return MgStatus::ErrNullPointer;
    }
    let cfg = MatchConfig {
        lambda,
        restarts,
        seed,
        ..MatchConfig::default()
    };
    let (a, b) = if (*g1).inner.n() == (*g2).inner.n() {
        ((*g1).inner.clone(), (*g2).inner.clone())
    } else {
        pad_with_null_nodes(&(*g1).inner, &(*g2).inner)
    };
    let result = match faq_match(&a, &b, &cfg) {
        Ok(r) => r,
        Err(e) => return status_from(&e),
    };
    match serde_json::to_string_pretty(&result) {
        Ok(s) => export_string(s, out_json),
        Err(e) => {
            set_last_error(&e.to_string());
            MgStatus::ErrData
        }
    }
}

/// Releases a graph handle; null is a no-op.
///
/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mg_graph_free(graph: *mut MgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Releases a string returned by this library; null is a no-op.
///
/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// serde_json is pulled in transitively through the core crate's re-export
// path; declare the direct use for mg_match_json's serialization.
use mobigraph::serde_json;
