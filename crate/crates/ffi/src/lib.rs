//! C bindings for `loanprofit`.
//!
//! Every fallible function returns an `LpStatus`. On failure the message is
//! kept per thread and can be fetched with [`lp_last_error`]. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use loanprofit::dataset::{self, generate_synthetic, LoadOptions, LoanTable, SyntheticConfig};
use loanprofit::loan_model::compute_arr;
use loanprofit::pipeline::{self, FittedPipeline, PipelineConfig};
use loanprofit::{Error, ErrorClass};

/// Status code returned by every fallible call.
pub type LpStatus = i32;

pub const LP_OK: LpStatus = 0;
/// Bad configuration or argument value.
pub const LP_ERR_USAGE: LpStatus = 2;
/// Malformed data, schema mismatch or a numeric domain error.
pub const LP_ERR_DATA: LpStatus = 3;
pub const LP_ERR_IO: LpStatus = 4;
/// A required pointer argument was null.
pub const LP_ERR_NULL: LpStatus = 5;
/// The library panicked; the handle involved should be discarded.
pub const LP_ERR_PANIC: LpStatus = 6;

/// A loaded or generated loan table.
pub struct LpTable(LoanTable);

/// A fitted one- or two-stage pipeline.
pub struct LpPipeline(FittedPipeline);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(error: &Error) -> LpStatus {
    match error.class() {
        ErrorClass::Usage => LP_ERR_USAGE,
        ErrorClass::Data => LP_ERR_DATA,
        ErrorClass::Io => LP_ERR_IO,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LP_OK
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed as `{what}`"));
            LP_ERR_NULL
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            LP_ERR_USAGE
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LP_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("`{what}` is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// Last error message on this thread, or null if the last call succeeded.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Annualized rate of return `(total_payment / principal)^(1/years)`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn lp_compute_arr(total_payment: f64, principal: f64, years: f64, out: *mut f64) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = compute_arr(total_payment, principal, years)?;
        Ok(())
    })
}

/// Loads expired loans from a CSV file with default column names.
/// Rows still in repayment are skipped; invalid rows are counted in
/// `rejected` when it is non-null.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_table_load_csv(path: *const c_char, out: *mut *mut LpTable, rejected: *mut usize) -> LpStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let report = dataset::load_csv(&path, &LoadOptions::default())?;
        if let Some(r) = rejected.as_mut() {
            *r = report.rejects.len();
        }
        *out = Box::into_raw(Box::new(LpTable(report.table)));
        Ok(())
    })
}

/// Generates `n` synthetic loans with the default generator settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_table_synthetic(n: usize, seed: u64, out: *mut *mut LpTable) -> LpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let table = generate_synthetic(n, seed, &SyntheticConfig::default())?;
        *out = Box::into_raw(Box::new(LpTable(table)));
        Ok(())
    })
}

/// Number of loans in a table, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_table_len(table: *const LpTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_table_free(table: *mut LpTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Seeded train/test split.
///
/// # Safety
/// `table` must be a live handle; `train` and `test` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_table_split(
    table: *const LpTable,
    train_fraction: f64,
    seed: u64,
    train: *mut *mut LpTable,
    test: *mut *mut LpTable,
) -> LpStatus {
    guard(|| {
        let table = handle(table, "table")?;
        let train = out_arg(train, "train")?;
        let test = out_arg(test, "test")?;
        let spec = dataset::SplitSpec { train_fraction, seed };
        let (a, b) = dataset::split(&table.0, &spec)?;
        *train = Box::into_raw(Box::new(LpTable(a)));
        *test = Box::into_raw(Box::new(LpTable(b)));
        Ok(())
    })
}

/// Fits a pipeline. `config` holds `key = value` lines as accepted by the
/// command line `--config` file and may be null for the defaults.
///
/// # Safety
/// `train` must be a live handle, `config` null or NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_pipeline_fit(train: *const LpTable, config: *const c_char, out: *mut *mut LpPipeline) -> LpStatus {
    guard(|| {
        let train = handle(train, "train")?;
        let out = out_arg(out, "out")?;
        let mut cfg = PipelineConfig::default();
        if !config.is_null() {
            for (k, v) in pipeline::parse_kv_lines(str_arg(config, "config")?)? {
                cfg.set(&k, &v)?;
            }
        }
        cfg.validate()?;
        let fitted = pipeline::fit(&train.0, &cfg)?;
        *out = Box::into_raw(Box::new(LpPipeline(fitted)));
        Ok(())
    })
}

/// Writes the pipeline artifacts into an existing directory.
///
/// # Safety
/// `pipeline` must be a live handle and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lp_pipeline_save(pipeline: *const LpPipeline, dir: *const c_char) -> LpStatus {
    guard(|| {
        let p = handle(pipeline, "pipeline")?;
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        p.0.save(&dir)?;
        Ok(())
    })
}

/// # Safety
/// `dir` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_pipeline_load(dir: *const c_char, out: *mut *mut LpPipeline) -> LpStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(LpPipeline(FittedPipeline::load(&dir)?)));
        Ok(())
    })
}

/// Predicted ARR for every loan of `table`, in table order. `arr_out` must
/// hold `lp_table_len(table)` doubles. `pd_out` may be null; otherwise it
/// receives predicted default probabilities (NaN for one-stage pipelines).
///
/// # Safety
/// Buffers must be valid for `lp_table_len(table)` writes.
#[no_mangle]
pub unsafe extern "C" fn lp_pipeline_score(
    pipeline: *const LpPipeline,
    table: *const LpTable,
    arr_out: *mut f64,
    pd_out: *mut f64,
) -> LpStatus {
    guard(|| {
        let p = handle(pipeline, "pipeline")?;
        let t = handle(table, "table")?;
        if arr_out.is_null() {
            return Err(Failure::Null("arr_out"));
        }
        let scores = p.0.score(&t.0)?;
        for (i, s) in scores.iter().enumerate() {
            *arr_out.add(i) = s.arr_hat;
            if !pd_out.is_null() {
                *pd_out.add(i) = s.pd_hat.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// Manifest text of a fitted pipeline. Release with [`lp_string_free`].
///
/// # Safety
/// `pipeline` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_pipeline_manifest(pipeline: *const LpPipeline, out: *mut *mut c_char) -> LpStatus {
    guard(|| {
        let p = handle(pipeline, "pipeline")?;
        let out = out_arg(out, "out")?;
        *out = CString::new(p.0.manifest())
            .map_err(|_| Failure::Arg("manifest contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_pipeline_free(pipeline: *mut LpPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn lp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
