// SPDX-License-Identifier: Apache-2.0

//! C ABI over the faasflow store, select engine and pipeline.
//!
//! Every fallible call returns an [`FfStatus`]; on failure the message is
//! available from [`ff_last_error`] on the same thread. Strings and buffers
//! handed out by the library must be released with [`ff_string_free`] and
//! [`ff_buffer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use faasflow::genome::{build_fasta_index, to_fai};
use faasflow::{gb_seconds, run_pipeline, select_cost, Error, ObjectStore, PipelineConfig, ScanQuery};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    NotFound = 3,
    Range = 4,
    Format = 5,
    Param = 6,
    Config = 7,
    StageFailed = 8,
    Io = 9,
    Internal = 10,
}

/// Opaque object store handle.
pub struct FfStore {
    inner: ObjectStore,
}

/// Bytes owned by the library.
#[repr(C)]
pub struct FfBuffer {
    pub data: *mut u8,
    pub len: usize,
}

/// Summary of a pipeline run.
#[repr(C)]
pub struct FfRunSummary {
    /// Key of the call set inside the configured bucket; free with `ff_string_free`.
    pub output_key: *mut c_char,
    pub align_tasks: usize,
    pub reduce_tasks: usize,
    pub gb_seconds: f64,
    pub gbsec_usd: f64,
    pub scan_bytes: u64,
    pub select_usd: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FfStatus {
    match err {
        Error::NotFound { .. } => FfStatus::NotFound,
        Error::Range { .. } => FfStatus::Range,
        Error::RowFormat { .. } | Error::Format(_) | Error::EmptyInput(_) => FfStatus::Format,
        Error::Param(_) => FfStatus::Param,
        Error::Config(_) => FfStatus::Config,
        Error::TaskFailed { .. } | Error::StageFailed { .. } | Error::Incomplete { .. } => FfStatus::StageFailed,
        Error::Storage { .. } | Error::Io(_) => FfStatus::Io,
        Error::Planner(_) | Error::Consistency(_) => FfStatus::Internal,
    }
}

struct Fail(FfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside faasflow".into());
            FfStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(FfStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn store<'a>(s: *const FfStore) -> Result<&'a ObjectStore, Fail> {
    s.as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| Fail(FfStatus::NullArgument, "store handle is null".into()))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(FfStatus::NullArgument, format!("{what} is null")))
}

fn c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(FfStatus::Format, "string contains NUL".into()))
}

fn buffer(v: Vec<u8>) -> FfBuffer {
    let boxed = v.into_boxed_slice();
    let len = boxed.len();
    FfBuffer {
        data: Box::into_raw(boxed) as *mut u8,
        len,
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn ff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ff_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `buf` must come from this library and be freed once.
#[no_mangle]
pub unsafe extern "C" fn ff_buffer_free(buf: FfBuffer) {
    if !buf.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
}

/// Opens (creating if needed) a store rooted at `root`. Returns null on
/// failure.
///
/// # Safety
/// `root` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ff_store_open(root: *const c_char) -> *mut FfStore {
    let mut handle = ptr::null_mut();
    guard(|| {
        let inner = ObjectStore::open(text(root, "root")?)?;
        handle = Box::into_raw(Box::new(FfStore { inner }));
        Ok(())
    });
    handle
}

/// # Safety
/// `s` must be null or a handle from `ff_store_open`, freed once.
#[no_mangle]
pub unsafe extern "C" fn ff_store_free(s: *mut FfStore) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// Strings must be NUL-terminated; `data` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ff_store_put(
    s: *const FfStore,
    bucket: *const c_char,
    key: *const c_char,
    data: *const u8,
    len: usize,
) -> FfStatus {
    guard(|| {
        let body = if len == 0 {
            &[][..]
        } else if data.is_null() {
            return Err(Fail(FfStatus::NullArgument, "data is null".into()));
        } else {
            slice::from_raw_parts(data, len)
        };
        store(s)?.put(text(bucket, "bucket")?, text(key, "key")?, body)?;
        Ok(())
    })
}

/// Size of an object in bytes.
///
/// # Safety
/// Strings must be NUL-terminated; `size` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_store_head(
    s: *const FfStore,
    bucket: *const c_char,
    key: *const c_char,
    size: *mut u64,
) -> FfStatus {
    guard(|| {
        let obj = store(s)?.head(text(bucket, "bucket")?, text(key, "key")?)?;
        *out(size, "size")? = obj.size;
        Ok(())
    })
}

/// Bytes `[lo, hi)` of an object.
///
/// # Safety
/// Strings must be NUL-terminated; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_store_get_range(
    s: *const FfStore,
    bucket: *const c_char,
    key: *const c_char,
    lo: u64,
    hi: u64,
    result: *mut FfBuffer,
) -> FfStatus {
    guard(|| {
        let st = store(s)?;
        let result = out(result, "result")?;
        let obj = st.head(text(bucket, "bucket")?, text(key, "key")?)?;
        *result = buffer(st.get_range(&obj, lo, hi)?);
        Ok(())
    })
}

/// Builds `<key>.fai` next to a FASTA object and returns its text.
///
/// # Safety
/// Strings must be NUL-terminated; `fai` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_index_fasta(
    s: *const FfStore,
    bucket: *const c_char,
    key: *const c_char,
    fai: *mut *mut c_char,
) -> FfStatus {
    guard(|| {
        let st = store(s)?;
        let fai = out(fai, "fai")?;
        let obj = st.head(text(bucket, "bucket")?, text(key, "key")?)?;
        let (entries, _) = build_fasta_index(st, &obj)?;
        *fai = c_string(to_fai(&entries))?;
        Ok(())
    })
}

/// Projects `columns` of every row whose `pred_column` value lies in
/// `[lo, hi]`; pass `has_predicate = 0` to keep all rows. Rows come back as
/// tab-separated lines.
///
/// # Safety
/// Strings must be NUL-terminated; `columns` must point to `n_columns`
/// values; `rows` and `bytes_scanned` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_select(
    s: *const FfStore,
    bucket: *const c_char,
    key: *const c_char,
    columns: *const usize,
    n_columns: usize,
    has_predicate: bool,
    pred_column: usize,
    lo: i64,
    hi: i64,
    rows: *mut *mut c_char,
    bytes_scanned: *mut u64,
) -> FfStatus {
    guard(|| {
        let st = store(s)?;
        let (rows, bytes_scanned) = (out(rows, "rows")?, out(bytes_scanned, "bytes_scanned")?);
        if columns.is_null() && n_columns > 0 {
            return Err(Fail(FfStatus::NullArgument, "columns is null".into()));
        }
        let cols = if n_columns == 0 {
            &[][..]
        } else {
            slice::from_raw_parts(columns, n_columns)
        };
        let mut query = ScanQuery::project(cols.to_vec());
        if has_predicate {
            query = query.between(pred_column, lo, hi);
        }
        let obj = st.head(text(bucket, "bucket")?, text(key, "key")?)?;
        let (found, scan) = faasflow::select::select(st, &obj, &query)?;
        let body: String = found.iter().map(|r| r.join("\t") + "\n").collect();
        *rows = c_string(body)?;
        *bytes_scanned = scan.bytes_scanned;
        Ok(())
    })
}

/// Runs the pipeline configured by `config_text` (`key = value` lines).
///
/// # Safety
/// `config_text` must be NUL-terminated; `summary` must be writable. On
/// success free `summary->output_key` with `ff_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ff_run_pipeline(config_text: *const c_char, summary: *mut FfRunSummary) -> FfStatus {
    guard(|| {
        let summary = out(summary, "summary")?;
        let mut config = PipelineConfig::default();
        config.apply_text(text(config_text, "config_text")?)?;
        config.apply_env();
        let report = run_pipeline(&config)?;
        *summary = FfRunSummary {
            output_key: c_string(report.output.key.clone())?,
            align_tasks: report.task_count(faasflow::Stage::Align),
            reduce_tasks: report.task_count(faasflow::Stage::Reduce),
            gb_seconds: report.gb_seconds,
            gbsec_usd: report.gbsec_usd,
            scan_bytes: report.scan_bytes,
            select_usd: report.select_usd,
        };
        Ok(())
    })
}

/// Σ memory_mb[i] / 1024 × billed_s[i] × usd_per_gbsec. Returns a negative
/// value when an array is null with `n > 0`.
///
/// # Safety
/// Both arrays must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ff_gbsec_cost(
    memory_mb: *const u64,
    billed_s: *const f64,
    n: usize,
    usd_per_gbsec: f64,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if memory_mb.is_null() || billed_s.is_null() {
        set_error("cost arrays are null".into());
        return -1.0;
    }
    let (mem, billed) = (slice::from_raw_parts(memory_mb, n), slice::from_raw_parts(billed_s, n));
    mem.iter().zip(billed).map(|(&m, &b)| gb_seconds(m, b)).sum::<f64>() * usd_per_gbsec
}

/// `bytes / 2^30 × usd_per_gb`.
#[no_mangle]
pub extern "C" fn ff_select_cost(bytes_scanned: u64, usd_per_gb: f64) -> f64 {
    select_cost(bytes_scanned, usd_per_gb)
}
