//! C interface to trained cuisine classifiers.
//!
//! A `CuisinePredictor` is an opaque handle to a model file and its
//! vocabulary. Every fallible call returns a `CuisineStatus`; on anything
//! other than `CUISINE_STATUS_OK` a message is available from
//! `cuisine_last_error()` on the same thread until the next failing call.
//!
//! ```c
//! CuisinePredictor *p = NULL;
//! if (cuisine_predictor_open("runs/logreg.model.json", &p) != CUISINE_STATUS_OK) {
//!     fprintf(stderr, "%s\n", cuisine_last_error());
//!     return 1;
//! }
//! const char *tokens[] = {"beef", "chunky salsa", "simmer", "skillet"};
//! size_t k = cuisine_predictor_n_classes(p);
//! double *scores = malloc(k * sizeof(double));
//! size_t class;
//! cuisine_predict(p, tokens, 4, &class, scores, NULL, k);
//! printf("%s\n", cuisine_predictor_label(p, class));
//! cuisine_predictor_free(p);
//! ```

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use cuisine::corpus::{load_corpus, Format, Partition, SplitManifest};
use cuisine::error::Error;
use cuisine::model::Predictor;
use cuisine::preprocess::preprocess_corpus;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CuisineStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A file could not be opened.
    NotFound = 3,
    /// A file could be opened but not read or parsed.
    Io = 4,
    /// The vocabulary does not hash to what the model expects.
    VocabMismatch = 5,
    /// Configuration or argument values out of range.
    InvalidArgument = 6,
    /// An output buffer is shorter than the number of classes.
    BufferTooSmall = 7,
    /// Any other library error.
    Failure = 8,
    /// The library panicked; the handle involved should be freed.
    Panic = 9,
}

/// Which part of a split manifest to evaluate on.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CuisinePartition {
    Train = 0,
    Validation = 1,
    Test = 2,
}

/// Opaque handle to a loaded model.
pub struct CuisinePredictor {
    inner: Predictor,
    labels: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CuisineStatus, msg: impl Into<String>) -> CuisineStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> CuisineStatus {
    match e {
        Error::NotFound { .. } => CuisineStatus::NotFound,
        Error::Io { .. } | Error::Json { .. } | Error::Row { .. } => CuisineStatus::Io,
        Error::VocabMismatch { .. } => CuisineStatus::VocabMismatch,
        Error::Config(_) | Error::Invalid(_) | Error::Dimension { .. } => CuisineStatus::InvalidArgument,
        _ => CuisineStatus::Failure,
    }
}

fn from_error(e: Error) -> CuisineStatus {
    fail(status_of(&e), e.to_string())
}

/// Run `f`, turning a panic into `CuisineStatus::Panic`.
fn guard(f: impl FnOnce() -> CuisineStatus) -> CuisineStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        fail(CuisineStatus::Panic, format!("panic: {msg}"))
    })
}

/// # Safety
/// `p` is NULL or a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, CuisineStatus> {
    if p.is_null() {
        return Err(fail(CuisineStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CuisineStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cuisine_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn cuisine_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Load a model file and the vocabulary it references. With `vocab_path`
/// NULL the vocabulary is found next to the model.
///
/// # Safety
/// `model_path` is a NUL-terminated string, `vocab_path` is NULL or one,
/// and `out` points to writable storage for a handle pointer.
#[no_mangle]
pub unsafe extern "C" fn cuisine_predictor_open_with_vocab(
    model_path: *const c_char,
    vocab_path: *const c_char,
    out: *mut *mut CuisinePredictor,
) -> CuisineStatus {
    guard(|| {
        if out.is_null() {
            return fail(CuisineStatus::NullArgument, "out is NULL");
        }
        *out = std::ptr::null_mut();
        let model = match read_str(model_path, "model_path") {
            Ok(s) => PathBuf::from(s),
            Err(status) => return status,
        };
        let loaded = if vocab_path.is_null() {
            Predictor::load(&model)
        } else {
            match read_str(vocab_path, "vocab_path") {
                Ok(v) => Predictor::load_with_vocab(&model, v),
                Err(status) => return status,
            }
        };
        let inner = match loaded {
            Ok(p) => p,
            Err(e) => return from_error(e),
        };
        let labels = inner
            .labels()
            .iter()
            .map(|l| CString::new(l.replace('\0', " ")).expect("NULs replaced"))
            .collect();
        *out = Box::into_raw(Box::new(CuisinePredictor { inner, labels }));
        CuisineStatus::Ok
    })
}

/// `cuisine_predictor_open_with_vocab` with the model's own vocabulary.
///
/// # Safety
/// As for `cuisine_predictor_open_with_vocab`.
#[no_mangle]
pub unsafe extern "C" fn cuisine_predictor_open(model_path: *const c_char, out: *mut *mut CuisinePredictor) -> CuisineStatus {
    cuisine_predictor_open_with_vocab(model_path, std::ptr::null(), out)
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `p` is NULL or a handle from `cuisine_predictor_open*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cuisine_predictor_free(p: *mut CuisinePredictor) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of classes, or 0 for a NULL handle.
///
/// # Safety
/// `p` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cuisine_predictor_n_classes(p: *const CuisinePredictor) -> usize {
    p.as_ref().map_or(0, |p| p.labels.len())
}

/// Name of class `index`, owned by the handle; NULL if out of range.
///
/// # Safety
/// `p` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cuisine_predictor_label(p: *const CuisinePredictor, index: usize) -> *const c_char {
    p.as_ref()
        .and_then(|p| p.labels.get(index))
        .map_or(std::ptr::null(), |l| l.as_ptr())
}

/// Classify one recipe given as `n_tokens` raw tokens (they are cleaned
/// with the model's preprocessing). Writes the class index to `out_class`
/// and, when non-NULL, the model's scores and probabilities to
/// `out_scores` / `out_probs`, each of which must hold `capacity` ≥ the
/// number of classes.
///
/// # Safety
/// `p` is a live handle; `tokens` points to `n_tokens` NUL-terminated
/// strings (or is NULL when `n_tokens` is 0); `out_class` is writable;
/// `out_scores` and `out_probs` are NULL or hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn cuisine_predict(
    p: *const CuisinePredictor,
    tokens: *const *const c_char,
    n_tokens: usize,
    out_class: *mut usize,
    out_scores: *mut f64,
    out_probs: *mut f64,
    capacity: usize,
) -> CuisineStatus {
    guard(|| {
        let Some(p) = p.as_ref() else {
            return fail(CuisineStatus::NullArgument, "predictor is NULL");
        };
        if out_class.is_null() {
            return fail(CuisineStatus::NullArgument, "out_class is NULL");
        }
        if tokens.is_null() && n_tokens > 0 {
            return fail(CuisineStatus::NullArgument, "tokens is NULL");
        }
        let k = p.labels.len();
        if (!out_scores.is_null() || !out_probs.is_null()) && capacity < k {
            return fail(CuisineStatus::BufferTooSmall, format!("buffers hold {capacity} values, model has {k} classes"));
        }
        let mut owned = Vec::with_capacity(n_tokens);
        for i in 0..n_tokens {
            match read_str(*tokens.add(i), &format!("tokens[{i}]")) {
                Ok(t) => owned.push(t),
                Err(status) => return status,
            }
        }
        let pred = match p.inner.predict(&owned) {
            Ok(pred) => pred,
            Err(e) => return from_error(e),
        };
        *out_class = pred.class;
        if !out_scores.is_null() {
            std::slice::from_raw_parts_mut(out_scores, k).copy_from_slice(&pred.scores);
        }
        if !out_probs.is_null() {
            std::slice::from_raw_parts_mut(out_probs, k).copy_from_slice(&pred.probs);
        }
        CuisineStatus::Ok
    })
}

/// Score the model on one partition of a split manifest over the dataset
/// at `data_path` (JSONL, or CSV when the path ends in `.csv`). Writes
/// accuracy and mean cross-entropy.
///
/// # Safety
/// `p` is a live handle; the paths are NUL-terminated strings; the outputs
/// are NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn cuisine_evaluate(
    p: *const CuisinePredictor,
    data_path: *const c_char,
    split_path: *const c_char,
    which: CuisinePartition,
    out_accuracy: *mut f64,
    out_loss: *mut f64,
) -> CuisineStatus {
    guard(|| {
        let Some(p) = p.as_ref() else {
            return fail(CuisineStatus::NullArgument, "predictor is NULL");
        };
        let (data, split) = match (read_str(data_path, "data_path"), read_str(split_path, "split_path")) {
            (Ok(d), Ok(s)) => (d, s),
            (Err(status), _) | (_, Err(status)) => return status,
        };
        let format = if data.ends_with(".csv") { Format::Csv } else { Format::Jsonl };
        let which = match which {
            CuisinePartition::Train => Partition::Train,
            CuisinePartition::Validation => Partition::Validation,
            CuisinePartition::Test => Partition::Test,
        };
        let report = load_corpus(data, format)
            .and_then(|o| preprocess_corpus(&o.corpus, &p.inner.file().config.preprocess))
            .and_then(|corpus| {
                let parts = SplitManifest::read(split)?.resolve(&corpus)?;
                let idx = match which {
                    Partition::Train => parts.train,
                    Partition::Validation => parts.validation,
                    Partition::Test => parts.test,
                };
                p.inner.evaluate(&corpus, &idx)
            });
        match report {
            Ok(r) => {
                if !out_accuracy.is_null() {
                    *out_accuracy = r.accuracy;
                }
                if !out_loss.is_null() {
                    *out_loss = r.loss;
                }
                CuisineStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
