//! C ABI over the vizattack toolkit.
//!
//! Models are opaque handles owned by the caller and released with the
//! matching `*_free`. Every fallible call returns a `VZA_*` status code; the
//! message of the last failure on the calling thread is available through
//! [`vza_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use vizattack::chartrec::{recommend, ChartType, RecModel};
use vizattack::datatable::{DataTable, LoadOptions};
use vizattack::harness::run::{EXIT_ATTACK_FAILED, EXIT_CONFIG};
use vizattack::harness::{exit_code_for, run, ExperimentConfig, Stage};
use vizattack::paradr::Projector;
use vizattack::Error;

pub const VZA_OK: i32 = 0;
pub const VZA_ERR_NULL: i32 = 1;
pub const VZA_ERR_UTF8: i32 = 2;
pub const VZA_ERR_IO: i32 = 3;
pub const VZA_ERR_SHAPE: i32 = 4;
pub const VZA_ERR_CONFIG: i32 = 5;
pub const VZA_ERR_ATTACK_FAILED: i32 = 6;
pub const VZA_ERR_MODEL: i32 = 7;
pub const VZA_ERR_INTERNAL: i32 = 8;
pub const VZA_ERR_PANIC: i32 = 9;

pub const VZA_STAGE_TRAIN_DR: i32 = 0;
pub const VZA_STAGE_FIT_SUBSTITUTE: i32 = 1;
pub const VZA_STAGE_TRAIN_REC: i32 = 2;
pub const VZA_STAGE_ATTACK: i32 = 3;

pub const VZA_CHART_SCATTER: i32 = 0;
pub const VZA_CHART_LINE: i32 = 1;
pub const VZA_CHART_BAR: i32 = 2;
pub const VZA_CHART_AREA: i32 = 3;
pub const VZA_CHART_PIE: i32 = 4;

/// Opaque projector handle.
pub struct VzaProjector(Projector);

/// Opaque recommender handle.
pub struct VzaRecommender(RecModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_for(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => VZA_ERR_IO,
        Error::ShapeMismatch(_) | Error::WidthMismatch { .. } => VZA_ERR_SHAPE,
        Error::BadModelFile(_) | Error::Json(_) | Error::InvalidSpec(_) => VZA_ERR_MODEL,
        e => match exit_code_for(e) {
            EXIT_CONFIG => VZA_ERR_CONFIG,
            EXIT_ATTACK_FAILED => VZA_ERR_ATTACK_FAILED,
            _ => VZA_ERR_INTERNAL,
        },
    }
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_for(&e), e.to_string())
    }
}

/// Runs `f`, records any failure, and maps it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VZA_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            VZA_ERR_PANIC
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure(VZA_ERR_NULL, format!("{what} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VZA_ERR_UTF8, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn null(what: &str) -> Failure {
    Failure(VZA_ERR_NULL, format!("{what} is null"))
}

fn chart_code(c: ChartType) -> i32 {
    match c {
        ChartType::Scatter => VZA_CHART_SCATTER,
        ChartType::Line => VZA_CHART_LINE,
        ChartType::Bar => VZA_CHART_BAR,
        ChartType::Area => VZA_CHART_AREA,
        ChartType::Pie => VZA_CHART_PIE,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vza_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vza_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Loads a projector written by `train-dr` (`path` plus its `.json` sidecar).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vza_projector_load(path: *const c_char, out: *mut *mut VzaProjector) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let p = Projector::load(&path)?;
        *out = Box::into_raw(Box::new(VzaProjector(p)));
        Ok(())
    })
}

/// Number of raw attributes the projector expects, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vza_projector_width(p: *const VzaProjector) -> usize {
    p.as_ref().map_or(0, |p| p.0.width())
}

/// Projects one raw-unit row of `len` values into `out_xy[0..2]`.
///
/// # Safety
/// `p` must be a live handle, `row` must point to `len` readable doubles and
/// `out_xy` to 2 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vza_projector_project(
    p: *const VzaProjector,
    row: *const f64,
    len: usize,
    out_xy: *mut f64,
) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("projector"))?;
        if row.is_null() {
            return Err(null("row"));
        }
        if out_xy.is_null() {
            return Err(null("out_xy"));
        }
        let raw = std::slice::from_raw_parts(row, len);
        let xy = p.0.project_row(raw)?;
        *out_xy = xy[0];
        *out_xy.add(1) = xy[1];
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`vza_projector_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vza_projector_free(p: *mut VzaProjector) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Loads a recommender written by `train-rec`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vza_recommender_load(path: *const c_char, out: *mut *mut VzaRecommender) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let m = RecModel::load(&path)?;
        *out = Box::into_raw(Box::new(VzaRecommender(m)));
        Ok(())
    })
}

/// Recommends a chart for the CSV table at `csv_path`. Writes the top chart
/// type (`VZA_CHART_*`) to `chart` and, when `json` is non-null, the full
/// recommendation as a JSON string to be released with [`vza_string_free`].
///
/// # Safety
/// `m` must be a live handle, `csv_path` a NUL-terminated string, `chart`
/// writable, `json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn vza_recommend_csv(
    m: *const VzaRecommender,
    csv_path: *const c_char,
    top_k: usize,
    chart: *mut i32,
    json: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("recommender"))?;
        if chart.is_null() {
            return Err(null("chart"));
        }
        if !json.is_null() {
            *json = ptr::null_mut();
        }
        let path = path_arg(csv_path, "csv_path")?;
        let table = DataTable::load_csv(&path, &LoadOptions::default())?;
        let rec = recommend(&m.0, &table, top_k.max(1))?;
        *chart = chart_code(rec.top().chart);
        if !json.is_null() {
            let text = serde_json::to_string(&rec).map_err(Error::from)?;
            *json = CString::new(text)
                .map_err(|_| Failure(VZA_ERR_INTERNAL, "NUL in JSON".into()))?
                .into_raw();
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`vza_recommender_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vza_recommender_free(m: *mut VzaRecommender) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vza_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs one experiment stage from a TOML config. `out_dir` may be null to use
/// the config's `output` or `runs/<name>`. `exit_status` receives the CLI exit
/// code of the run (0 success, 2 config, 3 attack failed, 4 internal); the
/// return value is `VZA_OK` whenever a report bundle was written.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `exit_status` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn vza_run_experiment(
    config_path: *const c_char,
    stage: i32,
    out_dir: *const c_char,
    exit_status: *mut i32,
) -> i32 {
    guard(|| {
        let config_path = path_arg(config_path, "config_path")?;
        let stage = match stage {
            VZA_STAGE_TRAIN_DR => Stage::TrainDr,
            VZA_STAGE_FIT_SUBSTITUTE => Stage::FitSubstitute,
            VZA_STAGE_TRAIN_REC => Stage::TrainRec,
            VZA_STAGE_ATTACK => Stage::Attack,
            s => return Err(Failure(VZA_ERR_CONFIG, format!("unknown stage {s}"))),
        };
        let config = ExperimentConfig::load(&config_path)?;
        let out = if out_dir.is_null() {
            config
                .output
                .clone()
                .unwrap_or_else(|| Path::new("runs").join(config.display_name()))
        } else {
            path_arg(out_dir, "out_dir")?
        };
        let outcome = run(&config, stage, &out)?;
        if !exit_status.is_null() {
            *exit_status = outcome.exit_code;
        }
        Ok(())
    })
}
