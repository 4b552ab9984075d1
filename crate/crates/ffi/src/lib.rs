//! C ABI over `wbalign`.
//!
//! Every fallible call returns a [`WbaStatus`]; on failure the message is
//! available from [`wba_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings returned
//! by accessors stay valid until the owning handle is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::{Array1, ArrayView2};
use wbalign::checkpoint::{self, Checkpoint};
use wbalign::cli::translate_checkpoint;
use wbalign::eval::Lexicon;
use wbalign::ot::{sinkhorn, Epsilon, SinkhornConfig};
use wbalign::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WbaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    Dimension = 6,
    Numerical = 7,
    UnknownLanguage = 8,
    Checkpoint = 9,
    Config = 10,
    UnknownWord = 11,
    Panic = 12,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> WbaStatus {
    match err {
        Error::Io { .. } => WbaStatus::Io,
        Error::Parse { .. } => WbaStatus::Parse,
        Error::Dimension(_) => WbaStatus::Dimension,
        Error::Numerical(_) => WbaStatus::Numerical,
        Error::UnknownLanguage(_) => WbaStatus::UnknownLanguage,
        Error::Checkpoint(_) => WbaStatus::Checkpoint,
        Error::Config(_) => WbaStatus::Config,
        Error::Phase { source, .. } => status_of(source),
        _ => WbaStatus::InvalidInput,
    }
}

struct Failure(WbaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, turning errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WbaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WbaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            WbaStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(WbaStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(WbaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn c_string(s: &str) -> CString {
    CString::new(s.replace('\0', " ")).expect("interior NULs replaced")
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wba_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wba_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loaded alignment checkpoint (flat or hierarchical).
pub struct WbaCheckpoint {
    inner: Checkpoint,
    tags: Vec<CString>,
}

/// Loads a checkpoint written by `wbalign align` or `wbalign hierarchical`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wba_checkpoint_load(path: *const c_char, out: *mut *mut WbaCheckpoint) -> WbaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = checkpoint::load(path)?;
        let tags = inner.languages().iter().map(|t| c_string(t)).collect();
        *out = Box::into_raw(Box::new(WbaCheckpoint { inner, tags }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`wba_checkpoint_load`] (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wba_checkpoint_free(handle: *mut WbaCheckpoint) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of languages in the checkpoint; 0 for NULL.
///
/// # Safety
/// `handle` must be a live checkpoint handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn wba_checkpoint_language_count(handle: *const WbaCheckpoint) -> usize {
    handle.as_ref().map_or(0, |h| h.tags.len())
}

/// Tag of language `index`, or NULL when out of range.
///
/// # Safety
/// `handle` must be a live checkpoint handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn wba_checkpoint_language(handle: *const WbaCheckpoint, index: usize) -> *const c_char {
    handle
        .as_ref()
        .and_then(|h| h.tags.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Whether the checkpoint holds a language tree rather than a flat alignment.
///
/// # Safety
/// `handle` must be a live checkpoint handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn wba_checkpoint_is_tree(handle: *const WbaCheckpoint) -> bool {
    handle.as_ref().is_some_and(|h| matches!(h.inner, Checkpoint::Tree(_)))
}

/// Ranked translations of one or all source words.
pub struct WbaLexicon {
    sources: Vec<CString>,
    targets: Vec<Vec<CString>>,
    scores: Vec<Vec<f64>>,
}

impl WbaLexicon {
    fn new(lex: &Lexicon) -> Self {
        let sources = lex.source_words.iter().map(|w| c_string(w)).collect();
        let targets = lex
            .rankings
            .iter()
            .map(|r| r.targets.iter().map(|&t| c_string(&lex.target_words[t])).collect())
            .collect();
        let scores = lex.rankings.iter().map(|r| r.scores.clone()).collect();
        Self { sources, targets, scores }
    }
}

/// Top-`k` translations from `src` to `tgt`. With `word` NULL the whole
/// source vocabulary is translated, otherwise only `word`.
///
/// # Safety
/// `handle` must be live, the strings NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wba_translate(
    handle: *const WbaCheckpoint,
    src: *const c_char,
    tgt: *const c_char,
    word: *const c_char,
    k: usize,
    nn_fallback: bool,
    out: *mut *mut WbaLexicon,
) -> WbaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(handle, "handle")?;
        let h = &*handle;
        let (src, tgt) = (str_arg(src, "src")?, str_arg(tgt, "tgt")?);
        let rows = if word.is_null() {
            None
        } else {
            let w = str_arg(word, "word")?;
            let space = match &h.inner {
                Checkpoint::Flat(s) => &s.spaces,
                Checkpoint::Tree(t) => &t.spaces,
            }
            .iter()
            .find(|s| s.language() == src)
            .ok_or_else(|| Failure(WbaStatus::UnknownLanguage, format!("unknown language `{src}`")))?;
            let row = space
                .word_index(w)
                .ok_or_else(|| Failure(WbaStatus::UnknownWord, format!("`{w}` is not in the `{src}` vocabulary")))?;
            Some(vec![row])
        };
        let lex = translate_checkpoint(&h.inner, src, tgt, rows.as_deref(), k, nn_fallback)?;
        *out = Box::into_raw(Box::new(WbaLexicon::new(&lex)));
        Ok(())
    })
}

/// # Safety
/// `lexicon` must come from [`wba_translate`] (or be NULL) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wba_lexicon_free(lexicon: *mut WbaLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Number of source words in the lexicon.
///
/// # Safety
/// `lexicon` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn wba_lexicon_len(lexicon: *const WbaLexicon) -> usize {
    lexicon.as_ref().map_or(0, |l| l.sources.len())
}

/// Source word of row `row`, or NULL when out of range.
///
/// # Safety
/// `lexicon` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn wba_lexicon_source(lexicon: *const WbaLexicon, row: usize) -> *const c_char {
    lexicon
        .as_ref()
        .and_then(|l| l.sources.get(row))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Number of ranked candidates of row `row` (0 for an empty coupling row).
///
/// # Safety
/// `lexicon` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn wba_lexicon_rank_count(lexicon: *const WbaLexicon, row: usize) -> usize {
    lexicon.as_ref().and_then(|l| l.targets.get(row)).map_or(0, Vec::len)
}

/// Candidate at 0-based `rank` of row `row`, or NULL when out of range.
///
/// # Safety
/// `lexicon` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn wba_lexicon_target(lexicon: *const WbaLexicon, row: usize, rank: usize) -> *const c_char {
    lexicon
        .as_ref()
        .and_then(|l| l.targets.get(row))
        .and_then(|r| r.get(rank))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Score of the candidate at `rank` of row `row`, NaN when out of range.
///
/// # Safety
/// `lexicon` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn wba_lexicon_score(lexicon: *const WbaLexicon, row: usize, rank: usize) -> f64 {
    lexicon
        .as_ref()
        .and_then(|l| l.scores.get(row))
        .and_then(|r| r.get(rank))
        .copied()
        .unwrap_or(f64::NAN)
}

/// Entropic transport plan between `a` (length `n`) and `b` (length `m`)
/// under the row-major `n x m` `cost`, written row-major into `plan`.
///
/// `epsilon > 0` is used as is; `epsilon <= 0` selects the library default
/// (a fixed fraction of the median cost). `max_iters == 0` and
/// `tolerance <= 0` also select defaults. `iterations` and `converged` may be NULL.
///
/// # Safety
/// The arrays must hold `n`, `m`, `n * m` and `n * m` doubles.
#[no_mangle]
pub unsafe extern "C" fn wba_sinkhorn(
    a: *const f64,
    n: usize,
    b: *const f64,
    m: usize,
    cost: *const f64,
    epsilon: f64,
    max_iters: usize,
    tolerance: f64,
    plan: *mut f64,
    iterations: *mut usize,
    converged: *mut bool,
) -> WbaStatus {
    guard(|| {
        for (p, what) in [(a, "a"), (b, "b"), (cost, "cost"), (plan.cast_const(), "plan")] {
            non_null(p, what)?;
        }
        if n == 0 || m == 0 {
            return Err(Failure(WbaStatus::InvalidInput, "empty marginal".into()));
        }
        let a = Array1::from(std::slice::from_raw_parts(a, n).to_vec());
        let b = Array1::from(std::slice::from_raw_parts(b, m).to_vec());
        let cost = ArrayView2::from_shape((n, m), std::slice::from_raw_parts(cost, n * m))
            .map_err(|e| Failure(WbaStatus::Dimension, e.to_string()))?;
        let mut cfg = SinkhornConfig::default();
        if epsilon > 0.0 {
            cfg.epsilon = Epsilon::Absolute(epsilon);
        }
        if max_iters > 0 {
            cfg.max_iters = max_iters;
        }
        if tolerance > 0.0 {
            cfg.tolerance = tolerance;
        }
        let sol = sinkhorn(&a, &b, cost, &cfg)?;
        let out = std::slice::from_raw_parts_mut(plan, n * m);
        for (o, &p) in out.iter_mut().zip(sol.coupling.matrix.iter()) {
            *o = p;
        }
        if let Some(it) = iterations.as_mut() {
            *it = sol.iterations;
        }
        if let Some(c) = converged.as_mut() {
            *c = sol.converged;
        }
        Ok(())
    })
}
