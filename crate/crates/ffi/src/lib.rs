//! C ABI over the foodsignal library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns an
//! [`FsStatus`]; the message of the last failure on the calling thread is
//! available from [`fs_last_error_message`]. Panics never unwind into C.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use foodsignal::error::ErrorClass;
use foodsignal::lexicon::{match_foods, FoodLexicon};
use foodsignal::modeling::{grouped_folds, RidgeModel};
use foodsignal::{network, stats, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Data = 4,
    Internal = 5,
}

/// Food lexicon handle.
pub struct FsLexicon {
    inner: FoodLexicon,
}

/// Fitted ridge model handle.
pub struct FsRidgeModel {
    inner: RidgeModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> FsStatus {
    match e.class() {
        ErrorClass::Config => FsStatus::Config,
        ErrorClass::Data => FsStatus::Data,
        ErrorClass::Internal => FsStatus::Internal,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), FsStatus>) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside foodsignal");
            FsStatus::Internal
        }
    }
}

fn fail(e: Error) -> FsStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> FsStatus {
    set_error(format!("{what} is null"));
    FsStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, FsStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        FsStatus::InvalidUtf8
    })
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], FsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string_set(p: *const *const c_char, len: usize, what: &str) -> Result<BTreeSet<String>, FsStatus> {
    slice_arg(p, len, what)?.iter().map(|&s| str_arg(s, what).map(str::to_string)).collect()
}

/// Copies the last error message of this thread into `buf`, NUL-terminated.
///
/// Returns the length the message needs including the terminator, or 0 when
/// there is no error. Nothing is written when `buf_len` is too small.
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes, or be null with `buf_len` 0.
#[no_mangle]
pub unsafe extern "C" fn fs_last_error_message(buf: *mut c_char, buf_len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && buf_len >= bytes.len() {
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a `surface,calories,class` lexicon CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_lexicon_load(path: *const c_char, out: *mut *mut FsLexicon) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let inner = FoodLexicon::from_csv_path(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(FsLexicon { inner }));
        Ok(())
    })
}

/// Builds a lexicon from CSV text held in memory.
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_lexicon_from_csv(csv: *const c_char, out: *mut *mut FsLexicon) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(csv, "csv")?;
        let inner = FoodLexicon::from_csv_reader(text.as_bytes()).map_err(fail)?;
        *out = Box::into_raw(Box::new(FsLexicon { inner }));
        Ok(())
    })
}

/// Number of entries, or 0 for a null handle.
///
/// # Safety
/// `lex` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_lexicon_len(lex: *const FsLexicon) -> usize {
    lex.as_ref().map_or(0, |l| l.inner.len())
}

/// Counts leftmost-longest food matches in `text` and their mean calories
/// (NaN when nothing matched).
///
/// # Safety
/// `lex` must be a live handle, `text` NUL-terminated, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn fs_match(
    lex: *const FsLexicon,
    text: *const c_char,
    out_count: *mut usize,
    out_avg_calories: *mut f64,
) -> FsStatus {
    guard(|| {
        let lex = lex.as_ref().ok_or_else(|| null("lex"))?;
        if out_count.is_null() || out_avg_calories.is_null() {
            return Err(null("output pointer"));
        }
        let m = match_foods(str_arg(text, "text")?, &lex.inner);
        *out_count = m.matches.len();
        *out_avg_calories = m.avg_calories.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `lex` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fs_lexicon_free(lex: *mut FsLexicon) {
    if !lex.is_null() {
        drop(Box::from_raw(lex));
    }
}

/// Loads a model JSON file written by the `fit` or `score` stages.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_model_load(path: *const c_char, out: *mut *mut FsRidgeModel) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = RidgeModel::load(Path::new(str_arg(path, "path")?)).map_err(fail)?;
        *out = Box::into_raw(Box::new(FsRidgeModel { inner }));
        Ok(())
    })
}

/// Number of model columns, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_model_columns(model: *const FsRidgeModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.columns.len())
}

/// Prediction for one row in the model's column order.
///
/// # Safety
/// `row` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_model_predict(
    model: *const FsRidgeModel,
    row: *const f64,
    len: usize,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let row = slice_arg(row, len, "row")?;
        if row.len() != model.inner.columns.len() {
            return Err(fail(Error::InvalidInput(format!(
                "row has {} values, model has {} columns",
                row.len(),
                model.inner.columns.len()
            ))));
        }
        *out = model.inner.predict_row(row);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fs_model_free(model: *mut FsRidgeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn pair_stat(
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> foodsignal::Result<f64>,
) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = f(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?).map_err(fail)?;
        Ok(())
    })
}

/// Pearson correlation of two length-`n` arrays.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_pearson(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> FsStatus {
    pair_stat(x, y, n, out, stats::pearson)
}

/// Spearman rank correlation with average ranks for ties.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> FsStatus {
    pair_stat(x, y, n, out, stats::spearman)
}

/// Two-sided p-value of a correlation `r` over `n` pairs.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_corr_pvalue(r: f64, n: usize, out: *mut f64) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = stats::corr_pvalue(r, n).map_err(fail)?;
        Ok(())
    })
}

/// Jaccard similarity of two string sets (duplicates ignored).
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fs_jaccard(
    a: *const *const c_char,
    na: usize,
    b: *const *const c_char,
    nb: usize,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = network::jaccard(&string_set(a, na, "a")?, &string_set(b, nb, "b")?);
        Ok(())
    })
}

/// Assigns each of `n` rows to one of `k` folds so that rows sharing a
/// group label share a fold.
///
/// # Safety
/// `groups` must point to `n` NUL-terminated strings; `out_folds` to `n` writable slots.
#[no_mangle]
pub unsafe extern "C" fn fs_grouped_folds(
    groups: *const *const c_char,
    n: usize,
    k: usize,
    seed: u64,
    out_folds: *mut usize,
) -> FsStatus {
    guard(|| {
        let labels: Vec<&str> =
            slice_arg(groups, n, "groups")?.iter().map(|&g| str_arg(g, "group")).collect::<Result<_, _>>()?;
        if n > 0 && out_folds.is_null() {
            return Err(null("out_folds"));
        }
        let folds = grouped_folds(&labels, k, seed).map_err(fail)?;
        if n > 0 {
            std::slice::from_raw_parts_mut(out_folds, n).copy_from_slice(&folds);
        }
        Ok(())
    })
}
