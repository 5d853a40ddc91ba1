//! C interface to `tabsynth`.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`TsStatus`]; on failure the message is available from
//! [`ts_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use tabsynth::harness::{run_experiment, ExperimentConfig};
use tabsynth::privacy::{noise_for_rho, PrivacyBudget};
use tabsynth::schema::{load_dataset, ClampPolicy};
use tabsynth::workload::{build_marginal_workload, evaluate, workload_error};
use tabsynth::{Dataset, Error, Norm, Provenance, TableSchema, Workload};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    BudgetError = 4,
    DataError = 5,
    IoError = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsProvenance {
    Private = 0,
    Public = 1,
    Synthetic = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsNorm {
    L1 = 0,
    Linf = 1,
}

pub struct TsSchema {
    inner: Arc<TableSchema>,
}

pub struct TsDataset {
    inner: Dataset,
}

pub struct TsWorkload {
    inner: Workload,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: TsStatus,
    message: String,
}

impl Failure {
    fn new(status: TsStatus, message: impl Into<String>) -> Self {
        Failure { status, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_config_error() {
            TsStatus::ConfigError
        } else if e.is_budget_error() {
            TsStatus::BudgetError
        } else if matches!(e, Error::Io { .. }) {
            TsStatus::IoError
        } else {
            TsStatus::DataError
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TsStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    let failure = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => return TsStatus::Ok,
        Ok(Err(f)) => f,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Failure::new(TsStatus::Panic, msg)
        }
    };
    set_last_error(&failure.message);
    failure.status
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(TsStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(TsStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(TsStatus::NullArgument, format!("{name} is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure::new(TsStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(p)
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a schema from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_schema_from_json(json: *const c_char, out: *mut *mut TsSchema) -> TsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let schema = TableSchema::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(TsSchema { inner: Arc::new(schema) }));
        Ok(())
    })
}

/// # Safety
/// `schema` must be null or a handle from [`ts_schema_from_json`].
#[no_mangle]
pub unsafe extern "C" fn ts_schema_column_count(schema: *const TsSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `schema` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_schema_free(schema: *mut TsSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Loads a CSV file. Private data rejects out-of-range numerics; other
/// provenances clamp them.
///
/// # Safety
/// `schema` must be a live handle, `path` a NUL-terminated string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_dataset_load_csv(
    schema: *const TsSchema,
    path: *const c_char,
    provenance: TsProvenance,
    out: *mut *mut TsDataset,
) -> TsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let schema = ref_arg(schema, "schema")?;
        let path = str_arg(path, "path")?;
        let provenance = match provenance {
            TsProvenance::Private => Provenance::Private,
            TsProvenance::Public => Provenance::Public,
            TsProvenance::Synthetic => Provenance::Synthetic,
        };
        let policy = ClampPolicy::default_for(provenance);
        let dataset = load_dataset(path, schema.inner.clone(), policy, provenance)?;
        *out = Box::into_raw(Box::new(TsDataset { inner: dataset }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_dataset_len(dataset: *const TsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_dataset_free(dataset: *mut TsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// All k-way marginals over the schema's columns.
///
/// # Safety
/// `schema` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_workload_marginal(schema: *const TsSchema, k: usize, out: *mut *mut TsWorkload) -> TsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let schema = ref_arg(schema, "schema")?;
        let workload = build_marginal_workload(schema.inner.clone(), k, None)?;
        *out = Box::into_raw(Box::new(TsWorkload { inner: workload }));
        Ok(())
    })
}

/// Number of linear queries in the workload.
///
/// # Safety
/// `workload` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_workload_len(workload: *const TsWorkload) -> usize {
    workload.as_ref().map_or(0, |w| w.inner.len())
}

/// # Safety
/// `workload` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_workload_free(workload: *mut TsWorkload) {
    if !workload.is_null() {
        drop(Box::from_raw(workload));
    }
}

/// Workload error between two datasets over the workload's schema.
///
/// # Safety
/// All handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_workload_error(
    workload: *const TsWorkload,
    a: *const TsDataset,
    b: *const TsDataset,
    norm: TsNorm,
    out: *mut f64,
) -> TsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let workload = &ref_arg(workload, "workload")?.inner;
        let (a, b) = (&ref_arg(a, "a")?.inner, &ref_arg(b, "b")?.inner);
        let expected = workload.schema().hash();
        if a.schema().hash() != expected || b.schema().hash() != expected {
            return Err(Failure::new(TsStatus::DataError, "dataset schema differs from the workload schema"));
        }
        let norm = match norm {
            TsNorm::L1 => Norm::L1,
            TsNorm::Linf => Norm::Linf,
        };
        *out = workload_error(&evaluate(workload, a)?, &evaluate(workload, b)?, norm)?;
        Ok(())
    })
}

/// Gaussian σ for an (ε, δ) budget and L2 sensitivity. An infinite ε gives 0.
///
/// # Safety
/// `out_sigma` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_calibrate(epsilon: f64, delta: f64, sensitivity: f64, out_sigma: *mut f64) -> TsStatus {
    guard(|| {
        let out = out_arg(out_sigma, "out_sigma")?;
        let budget =
            if epsilon == f64::INFINITY { PrivacyBudget::infinite(delta)? } else { PrivacyBudget::new(epsilon, delta)? };
        *out = noise_for_rho(budget.rho, sensitivity)?.sigma;
        Ok(())
    })
}

/// Runs an experiment config. `out_dir` may be null to keep the config's
/// output directory.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` null or one.
#[no_mangle]
pub unsafe extern "C" fn ts_run_experiment(config_path: *const c_char, out_dir: *const c_char) -> TsStatus {
    guard(|| {
        let mut config = ExperimentConfig::load(Path::new(str_arg(config_path, "config_path")?))?;
        if !out_dir.is_null() {
            config.set_output_dir(str_arg(out_dir, "out_dir")?);
        }
        run_experiment(&config)?;
        Ok(())
    })
}
