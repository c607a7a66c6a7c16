//! C ABI over `cmust-core`.
//!
//! Objects cross the boundary as opaque pointers created by `*_load` or
//! `*_open` functions and released with the matching `*_free`. Every
//! fallible call returns a [`CmustStatus`]; on failure the message is
//! available from [`cmust_last_error_message`] until the next failing call
//! on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cmust_core::cli::{run_config, RunConfig};
use cmust_core::data::{generate_synthetic, load_dataset, SyntheticSpec};
use cmust_core::harness::{evaluate, load_checkpoint, predict_windows, TaskData};
use cmust_core::model::Model;
use cmust_core::numerics::Parameter;
use cmust_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmustStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Shape = 5,
    Diverged = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

/// A loaded checkpoint: network, task prompt and metadata.
pub struct CmustModel {
    model: Model,
    prompt: Parameter,
    task: CString,
    nodes: usize,
}

/// A dataset windowed for one model.
pub struct CmustDataset {
    task: TaskData,
}

/// Test-split metrics in data units.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CmustMetrics {
    pub mae: f64,
    pub mape: f64,
    pub windows: usize,
    pub elements: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CmustStatus {
    match err {
        Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) | Error::Format { .. } => CmustStatus::Config,
        Error::Io { .. } => CmustStatus::Io,
        Error::Shape(_) | Error::UnknownParameter(_) => CmustStatus::Shape,
        Error::Divergence(_) | Error::NonFinite(_) => CmustStatus::Diverged,
        _ => CmustStatus::Internal,
    }
}

struct Failure(CmustStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CmustStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmustStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CmustStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(CmustStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CmustStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(CmustStatus::NullPointer, format!("{what} is NULL")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(CmustStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cmust_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cmust_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint directory into `*out`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmust_model_load(dir: *const c_char, out: *mut *mut CmustModel) -> CmustStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let dir = str_arg(dir, "dir")?;
        let (meta, model, prompt) = load_checkpoint(&PathBuf::from(dir))?;
        let task = CString::new(meta.task.replace('\0', " ")).expect("interior NULs removed");
        *out = Box::into_raw(Box::new(CmustModel {
            model,
            prompt,
            task,
            nodes: meta.nodes,
        }));
        Ok(())
    })
}

/// Releases a model; NULL is ignored.
///
/// # Safety
/// `model` must come from [`cmust_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmust_model_free(model: *mut CmustModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Task name stored in the checkpoint; owned by the model.
///
/// # Safety
/// `model` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn cmust_model_task(model: *const CmustModel) -> *const c_char {
    model.as_ref().map_or(ptr::null(), |m| m.task.as_ptr())
}

/// Number of scalar weights, prompt excluded.
///
/// # Safety
/// `model` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn cmust_model_parameter_count(model: *const CmustModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.params.element_count())
}

/// Number of frozen scalar weights.
///
/// # Safety
/// `model` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn cmust_model_frozen_count(model: *const CmustModel) -> usize {
    model
        .as_ref()
        .map_or(0, |m| m.model.params.iter().map(Parameter::frozen_count).sum())
}

/// Opens a dataset directory and windows it to fit `model`.
///
/// # Safety
/// `model` must be a live model, `dir` a NUL-terminated string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmust_dataset_open(
    model: *const CmustModel,
    dir: *const c_char,
    out: *mut *mut CmustDataset,
) -> CmustStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = ref_arg(model, "model")?;
        let d = load_dataset(&PathBuf::from(str_arg(dir, "dir")?))?;
        let c = &m.model.config;
        let man = &d.manifest;
        if man.nodes != m.nodes || man.channels != c.in_channels || man.slots_per_day() != c.slots_per_day {
            return Err(Failure(
                CmustStatus::Config,
                format!(
                    "dataset `{}` ({} nodes, {} channels, {} slots per day) does not fit the checkpoint",
                    man.name,
                    man.nodes,
                    man.channels,
                    man.slots_per_day()
                ),
            ));
        }
        let task = TaskData::new(d, c.input_len, c.horizon, 1, c.out_channels)?;
        *out = Box::into_raw(Box::new(CmustDataset { task }));
        Ok(())
    })
}

/// Releases a dataset; NULL is ignored.
///
/// # Safety
/// `dataset` must come from [`cmust_dataset_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmust_dataset_free(dataset: *mut CmustDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of test windows.
///
/// # Safety
/// `dataset` must be NULL or a live dataset.
#[no_mangle]
pub unsafe extern "C" fn cmust_dataset_test_windows(dataset: *const CmustDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.task.split.test.len())
}

/// Length of one prediction, `horizon * nodes * out_channels`.
///
/// # Safety
/// Both pointers must be NULL or live objects.
#[no_mangle]
pub unsafe extern "C" fn cmust_prediction_len(model: *const CmustModel, dataset: *const CmustDataset) -> usize {
    match (model.as_ref(), dataset.as_ref()) {
        (Some(m), Some(d)) => m.model.config.horizon * d.task.nodes() * m.model.config.out_channels,
        _ => 0,
    }
}

/// Test-split MAE and MAPE.
///
/// # Safety
/// `model` and `dataset` must be live objects and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmust_evaluate(
    model: *const CmustModel,
    dataset: *const CmustDataset,
    batch_size: usize,
    out: *mut CmustMetrics,
) -> CmustStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        let d = ref_arg(dataset, "dataset")?;
        let r = evaluate(&m.model, &m.prompt.value, &d.task, &d.task.split.test, batch_size)?;
        *out = CmustMetrics {
            mae: r.mae,
            mape: r.mape,
            windows: r.windows,
            elements: r.elements,
        };
        Ok(())
    })
}

/// Writes the denormalized forecast `[horizon][nodes][out_channels]` for
/// test window `window` into `buf`, which must hold
/// [`cmust_prediction_len`] values.
///
/// # Safety
/// `model` and `dataset` must be live objects and `buf` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cmust_predict(
    model: *const CmustModel,
    dataset: *const CmustDataset,
    window: usize,
    buf: *mut f64,
    len: usize,
) -> CmustStatus {
    guard(|| {
        out_arg(buf, "buf")?;
        let m = ref_arg(model, "model")?;
        let d = ref_arg(dataset, "dataset")?;
        let need = cmust_prediction_len(model, dataset);
        if len < need {
            return Err(Failure(
                CmustStatus::BufferTooSmall,
                format!("buffer holds {len} values, {need} needed"),
            ));
        }
        let start = *d.task.split.test.get(window).ok_or_else(|| {
            Failure(
                CmustStatus::Config,
                format!("window {window} out of range ({} test windows)", d.task.split.test.len()),
            )
        })?;
        let pred = predict_windows(&m.model, &m.prompt.value, &d.task, &[start], 1)?;
        std::slice::from_raw_parts_mut(buf, need).copy_from_slice(pred[0].data());
        Ok(())
    })
}

/// Writes `tasks` synthetic dataset directories under `out_dir`.
///
/// # Safety
/// `out_dir` must be a NUL-terminated string.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn cmust_generate_synthetic(
    seed: u64,
    tasks: usize,
    nodes: usize,
    steps: usize,
    interval_minutes: u32,
    coupling: f64,
    noise_sd: f64,
    out_dir: *const c_char,
) -> CmustStatus {
    guard(|| {
        let root = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let spec = SyntheticSpec {
            seed,
            tasks,
            nodes,
            steps,
            interval_minutes,
            coupling,
            noise_sd,
        };
        for d in generate_synthetic(&spec)? {
            d.save(&root.join(&d.manifest.name))?;
        }
        Ok(())
    })
}

/// Runs the experiment described by the JSON run configuration `config`,
/// writing artifacts to `output_dir` (or the configured directory when
/// NULL). The mean test MAE over tasks goes to `mean_mae` when non-NULL.
///
/// # Safety
/// `config` must be a NUL-terminated string; `output_dir` NULL or one;
/// `mean_mae` NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmust_train(config: *const c_char, output_dir: *const c_char, mean_mae: *mut f64) -> CmustStatus {
    guard(|| {
        let mut cfg = RunConfig::from_json(str_arg(config, "config")?)?;
        if !output_dir.is_null() {
            cfg.output.dir = PathBuf::from(str_arg(output_dir, "output_dir")?);
        }
        let out = cfg.output_dir();
        let outcome = run_config(cfg, &out)?;
        if !mean_mae.is_null() {
            *mean_mae = outcome.mean_test_mae();
        }
        Ok(())
    })
}

/// Metrics of a finished run as a JSON string; release with
/// [`cmust_string_free`].
///
/// # Safety
/// `run_dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmust_run_metrics_json(run_dir: *const c_char, out: *mut *mut c_char) -> CmustStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(run_dir, "run_dir")?).join("metrics.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
        let compact = serde_json::to_string(&value).map_err(Error::from)?;
        *out = CString::new(compact).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// Frees a string returned by this library; NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmust_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
