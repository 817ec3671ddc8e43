//! C ABI over `revgen-core`.
//!
//! Conventions:
//! - Every function returns a [`RevgenStatus`]; results go through out-pointers.
//! - Strings passed in are NUL-terminated UTF-8. Strings handed out are owned
//!   by the caller and must be released with [`revgen_string_free`].
//! - On failure, [`revgen_last_error`] describes the most recent error on the
//!   calling thread.
//! - A [`RevgenSession`] may be shared across threads; free it exactly once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use revgen_core::dataset::GenerationSample;
use revgen_core::humaneval::{HumanEvalError, Session, SessionHandle, SessionStore};
use revgen_core::metrics;
use revgen_core::prompt::{self, PromptError, PromptMode, PromptOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevgenStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON or a value outside its allowed range.
    InvalidInput = 3,
    NotFound = 4,
    AlreadyExists = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RevgenScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Opaque handle to one human-eval session backed by an on-disk log.
pub struct RevgenSession {
    _store: SessionStore,
    handle: Arc<SessionHandle>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(RevgenStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: RevgenStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, records any error, and converts panics into `Internal`.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> RevgenStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RevgenStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            RevgenStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(RevgenStatus::NullArgument, format!("{name} is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| {
        fail(
            RevgenStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    // SAFETY: non-null checked; the caller guarantees the pointer is writable.
    unsafe { p.as_mut() }.map_or_else(
        || fail(RevgenStatus::NullArgument, format!("{name} is null")),
        Ok,
    )
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .or_else(|_| fail(RevgenStatus::InvalidInput, "output contains a NUL byte"))
}

fn session_error(e: HumanEvalError) -> Failure {
    use HumanEvalError::*;
    let status = match &e {
        UnknownSession(_) | UnknownAnnotator(_) | UnknownPair(_) => RevgenStatus::NotFound,
        DuplicateSessionId(_) => RevgenStatus::AlreadyExists,
        InvalidPairsFile(_) | InvalidSessionId(_) | InvalidAnnotators(_) | InvalidLabel(_) => {
            RevgenStatus::InvalidInput
        }
        CorruptSession { .. } | Io(_) => RevgenStatus::Io,
    };
    Failure(status, e.to_string())
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call on this thread; do not free it.
#[no_mangle]
pub extern "C" fn revgen_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn revgen_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn rouge(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut RevgenScore,
    f: fn(&str, &str) -> metrics::Score,
) -> RevgenStatus {
    guard(|| {
        let c = str_arg(candidate, "candidate")?;
        let r = str_arg(reference, "reference")?;
        let out = out_arg(out, "out")?;
        let s = f(c, r);
        *out = RevgenScore {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
        };
        Ok(())
    })
}

/// ROUGE-1 of `candidate` against `reference`.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_rouge_1(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut RevgenScore,
) -> RevgenStatus {
    rouge(candidate, reference, out, metrics::rouge_1)
}

/// ROUGE-L (LCS based) of `candidate` against `reference`.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_rouge_l(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut RevgenScore,
) -> RevgenStatus {
    rouge(candidate, reference, out, metrics::rouge_l)
}

/// Mean of `len` per-sample scores, ×100, rounded to two decimals.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_corpus_aggregate(
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> RevgenStatus {
    guard(|| {
        if values.is_null() {
            return fail(RevgenStatus::NullArgument, "values is null");
        }
        let out = out_arg(out, "out")?;
        let slice = std::slice::from_raw_parts(values, len);
        *out = metrics::corpus_aggregate(slice)
            .or_else(|e| fail(RevgenStatus::InvalidInput, e.to_string()))?;
        Ok(())
    })
}

/// Renders the prompt for one sample given as a JSON object (a line of a split
/// file). `*out_completion` receives the reference review in training mode and
/// an empty string in inference mode. Both outputs must be freed.
///
/// # Safety
/// `sample_json` must be a valid NUL-terminated string; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_build_prompt(
    sample_json: *const c_char,
    include_ratings: bool,
    inference: bool,
    history_token_budget: usize,
    out_prompt: *mut *mut c_char,
    out_completion: *mut *mut c_char,
) -> RevgenStatus {
    guard(|| {
        let json = str_arg(sample_json, "sample_json")?;
        let out_prompt = out_arg(out_prompt, "out_prompt")?;
        let out_completion = out_arg(out_completion, "out_completion")?;
        let sample: GenerationSample = serde_json::from_str(json)
            .or_else(|e| fail(RevgenStatus::InvalidInput, format!("sample_json: {e}")))?;
        let opts = PromptOptions {
            include_ratings,
            mode: if inference {
                PromptMode::Inference
            } else {
                PromptMode::Training
            },
            history_token_budget,
        };
        let ex = prompt::build_prompt(&sample, &opts).map_err(|e| match e {
            PromptError::Io(_) => Failure(RevgenStatus::Io, e.to_string()),
            _ => Failure(RevgenStatus::InvalidInput, e.to_string()),
        })?;
        let p = to_c_string(ex.prompt)?;
        match to_c_string(ex.completion) {
            Ok(c) => {
                *out_prompt = p;
                *out_completion = c;
                Ok(())
            }
            Err(e) => {
                revgen_string_free(p);
                Err(e)
            }
        }
    })
}

fn box_session(store: SessionStore, handle: Arc<SessionHandle>, out: &mut *mut RevgenSession) {
    *out = Box::into_raw(Box::new(RevgenSession {
        _store: store,
        handle,
    }));
}

/// Opens an existing session stored under `store_dir`, replaying its log.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_session_open(
    store_dir: *const c_char,
    session_id: *const c_char,
    out: *mut *mut RevgenSession,
) -> RevgenStatus {
    guard(|| {
        let dir = str_arg(store_dir, "store_dir")?;
        let id = str_arg(session_id, "session_id")?;
        let out = out_arg(out, "out")?;
        let store = SessionStore::open(dir).map_err(session_error)?;
        let handle = store.get(id).map_err(session_error)?;
        box_session(store, handle, out);
        Ok(())
    })
}

/// Creates a session from JSON `{"session_id", "pairs", "annotator_ids"}`.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_session_create(
    store_dir: *const c_char,
    session_json: *const c_char,
    out: *mut *mut RevgenSession,
) -> RevgenStatus {
    guard(|| {
        let dir = str_arg(store_dir, "store_dir")?;
        let json = str_arg(session_json, "session_json")?;
        let out = out_arg(out, "out")?;
        let session: Session = serde_json::from_str(json)
            .or_else(|e| fail(RevgenStatus::InvalidInput, format!("session_json: {e}")))?;
        let store = SessionStore::open(dir).map_err(session_error)?;
        let handle = store.create_session(session).map_err(session_error)?;
        box_session(store, handle, out);
        Ok(())
    })
}

unsafe fn session_ref<'a>(s: *const RevgenSession) -> FfiResult<&'a RevgenSession> {
    s.as_ref()
        .map_or_else(|| fail(RevgenStatus::NullArgument, "session is null"), Ok)
}

/// Next unjudged pair for an annotator as JSON `{"done", "pair"?, "progress"}`.
/// The pair carries no system name.
///
/// # Safety
/// `session` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_session_next_pair_json(
    session: *const RevgenSession,
    annotator_id: *const c_char,
    out_json: *mut *mut c_char,
) -> RevgenStatus {
    guard(|| {
        let s = session_ref(session)?;
        let annotator = str_arg(annotator_id, "annotator_id")?;
        let out = out_arg(out_json, "out_json")?;
        let next = s.handle.next_pair(annotator).map_err(session_error)?;
        *out = to_c_string(serde_json::to_string(&next).expect("serializable"))?;
        Ok(())
    })
}

/// Appends a judgment (`label` 0 or 1). Re-judging a pair overrides the
/// earlier label. Progress for the annotator is written to the out-pointers,
/// either of which may be null.
///
/// # Safety
/// `session` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_session_submit(
    session: *const RevgenSession,
    annotator_id: *const c_char,
    pair_id: *const c_char,
    label: u8,
    out_judged: *mut usize,
    out_total: *mut usize,
) -> RevgenStatus {
    guard(|| {
        let s = session_ref(session)?;
        let annotator = str_arg(annotator_id, "annotator_id")?;
        let pair = str_arg(pair_id, "pair_id")?;
        let progress = s
            .handle
            .submit_judgment(annotator, pair, label)
            .map_err(session_error)?;
        if let Some(j) = out_judged.as_mut() {
            *j = progress.judged;
        }
        if let Some(t) = out_total.as_mut() {
            *t = progress.total;
        }
        Ok(())
    })
}

/// Aggregate statistics as JSON (per-system mean/min/max accuracy and more).
///
/// # Safety
/// `session` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn revgen_session_stats_json(
    session: *const RevgenSession,
    out_json: *mut *mut c_char,
) -> RevgenStatus {
    guard(|| {
        let s = session_ref(session)?;
        let out = out_arg(out_json, "out_json")?;
        *out = to_c_string(serde_json::to_string(&s.handle.aggregate()).expect("serializable"))?;
        Ok(())
    })
}

/// Releases a session handle. Null is ignored.
///
/// # Safety
/// `session` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn revgen_session_free(session: *mut RevgenSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}
