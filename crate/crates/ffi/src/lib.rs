//! C ABI for the occupancy forecasting library.
//!
//! Conventions:
//! - Handles (`VcConfig`, `VcModel`) are opaque; create them with the
//!   corresponding `_load`/`_new` function and release them with `_free`.
//! - Functions return [`VcStatus`]; on failure, `vc_last_error` returns a
//!   message valid until the next call on the same thread.
//! - Strings returned as `char*` are owned by the caller and must be
//!   released with `vc_string_free`.
//! - Model compute runs in 32-bit floating point.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

use voxcast::complexity::compare_variants;
use voxcast::config::RunConfig;
use voxcast::dataset::{load_manifest, load_split, save_dataset};
use voxcast::error::Error;
use voxcast::metrics::{evaluate, CopyLastBaseline, NetworkForecaster, OracleForecaster};
use voxcast::model::{Ablation, Model, PipelineGeom};
use voxcast::scene::WorldConfig;
use voxcast::tensor::params::ParamStore;
use voxcast::trainer::load_checkpoint;

/// Result codes; mirror the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcStatus {
    Ok = 0,
    /// Invalid configuration or arguments.
    ConfigError = 2,
    /// I/O or computation failure.
    RuntimeError = 3,
    /// A required pointer argument was null.
    NullArgument = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

fn status_of(err: &Error) -> VcStatus {
    match err.exit_code() {
        2 => VcStatus::ConfigError,
        _ => VcStatus::RuntimeError,
    }
}

fn fail(err: Error) -> VcStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Opaque run configuration handle.
pub struct VcConfig {
    inner: RunConfig,
}

/// Opaque model handle: architecture plus parameters.
pub struct VcModel {
    store: ParamStore<f32>,
    model: Model,
    world: WorldConfig,
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, VcStatus> {
    if ptr.is_null() {
        set_error("null path argument");
        return Err(VcStatus::NullArgument);
    }
    let s = unsafe { CStr::from_ptr(ptr) };
    match s.to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid utf-8");
            Err(VcStatus::ConfigError)
        }
    }
}

fn string_out(s: String) -> *mut c_char {
    let cleaned: String = s.chars().filter(|&c| c != '\0').collect();
    CString::new(cleaned).unwrap().into_raw()
}

/// Library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn vc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next library call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn vc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by a `vc_*` function that
/// documents caller ownership, and must not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn vc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Parses and validates a TOML run configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vc_config_load(
    path: *const c_char,
    out: *mut *mut VcConfig,
) -> VcStatus {
    if out.is_null() {
        set_error("null output pointer");
        return VcStatus::NullArgument;
    }
    let path = match unsafe { path_arg(path) } {
        Ok(p) => p,
        Err(st) => return st,
    };
    match RunConfig::load(&path) {
        Ok(cfg) => {
            unsafe { *out = Box::into_raw(Box::new(VcConfig { inner: cfg })) };
            VcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `cfg` must come from `vc_config_load` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vc_config_free(cfg: *mut VcConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Content hash of the configuration (hex, caller-owned string).
///
/// # Safety
/// `cfg` must be a live handle from `vc_config_load`.
#[no_mangle]
pub unsafe extern "C" fn vc_config_hash(cfg: *const VcConfig) -> *mut c_char {
    if cfg.is_null() {
        set_error("null config handle");
        return std::ptr::null_mut();
    }
    string_out(unsafe { &*cfg }.inner.hash())
}

/// Generates the dataset described by the configuration into its data dir.
///
/// # Safety
/// `cfg` must be a live handle from `vc_config_load`.
#[no_mangle]
pub unsafe extern "C" fn vc_generate_dataset(cfg: *const VcConfig) -> VcStatus {
    if cfg.is_null() {
        set_error("null config handle");
        return VcStatus::NullArgument;
    }
    let cfg = &unsafe { &*cfg }.inner;
    match save_dataset(
        &cfg.data.dir,
        &cfg.world,
        cfg.data.n_train,
        cfg.data.n_eval,
        &cfg.hash(),
    ) {
        Ok(_) => VcStatus::Ok,
        Err(e) => fail(e),
    }
}

fn build_model(cfg: &RunConfig) -> Result<VcModel, Error> {
    let geom = PipelineGeom::from_world(&cfg.world);
    let mut store = ParamStore::<f32>::new();
    let model = Model::build(
        &mut store,
        &cfg.model,
        &geom,
        cfg.task.kind,
        Ablation::None,
        cfg.train.seed,
    )?;
    Ok(VcModel {
        store,
        model,
        world: cfg.world.clone(),
    })
}

/// Builds a freshly initialized model for the configuration.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vc_model_new(cfg: *const VcConfig, out: *mut *mut VcModel) -> VcStatus {
    if cfg.is_null() || out.is_null() {
        set_error("null argument");
        return VcStatus::NullArgument;
    }
    match build_model(&unsafe { &*cfg }.inner) {
        Ok(m) => {
            unsafe { *out = Box::into_raw(Box::new(m)) };
            VcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Builds the model and restores parameters from a checkpoint file.
///
/// # Safety
/// `cfg` must be a live handle; `checkpoint` a NUL-terminated path; `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vc_model_load(
    cfg: *const VcConfig,
    checkpoint: *const c_char,
    out: *mut *mut VcModel,
) -> VcStatus {
    if cfg.is_null() || out.is_null() {
        set_error("null argument");
        return VcStatus::NullArgument;
    }
    let path = match unsafe { path_arg(checkpoint) } {
        Ok(p) => p,
        Err(st) => return st,
    };
    let mut m = match build_model(&unsafe { &*cfg }.inner) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    match load_checkpoint(&path, &mut m.store, None) {
        Ok(_) => {
            unsafe { *out = Box::into_raw(Box::new(m)) };
            VcStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `model` must come from `vc_model_new`/`vc_model_load`.
#[no_mangle]
pub unsafe extern "C" fn vc_model_free(model: *mut VcModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Total number of parameters in the model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vc_model_param_count(model: *const VcModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.store.total_elements()
}

/// Parameter/FLOP comparison of the four observer variants plus the full
/// pipeline, as a JSON document (caller-owned string; null on failure).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vc_cost_report_json(cfg: *const VcConfig) -> *mut c_char {
    if cfg.is_null() {
        set_error("null config handle");
        return std::ptr::null_mut();
    }
    let cfg = &unsafe { &*cfg }.inner;
    let geom = PipelineGeom::from_world(&cfg.world);
    match compare_variants(&cfg.model, &geom, cfg.task.kind) {
        Ok(cmp) => match serde_json::to_string_pretty(&cmp) {
            Ok(json) => string_out(json),
            Err(e) => {
                set_error(&e.to_string());
                std::ptr::null_mut()
            }
        },
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

fn eval_to_json(cfg: &RunConfig, model: Option<&VcModel>, source: &str) -> Result<String, Error> {
    let manifest = load_manifest(&cfg.data.dir)?;
    let samples = load_split(Path::new(&cfg.data.dir), &manifest, "eval")?;
    let task = cfg.task.kind;
    let report = match (source, model) {
        ("network", Some(m)) => {
            let fc = NetworkForecaster {
                model: &m.model,
                store: &m.store,
                world: &m.world,
            };
            evaluate(&fc, &samples, task)?
        }
        ("copy-last", _) => evaluate(&CopyLastBaseline { task }, &samples, task)?,
        ("oracle", _) => evaluate(&OracleForecaster { task }, &samples, task)?,
        _ => return Err(Error::config("unknown evaluation source")),
    };
    serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))
}

/// Evaluates the model on the configured eval split; returns the IoU report
/// as JSON (caller-owned string; null on failure).
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn vc_evaluate_json(
    cfg: *const VcConfig,
    model: *const VcModel,
) -> *mut c_char {
    if cfg.is_null() || model.is_null() {
        set_error("null argument");
        return std::ptr::null_mut();
    }
    match eval_to_json(
        &unsafe { &*cfg }.inner,
        Some(unsafe { &*model }),
        "network",
    ) {
        Ok(json) => string_out(json),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}

/// Evaluates a reference source (`"copy-last"` or `"oracle"`) on the eval
/// split; returns the IoU report as JSON (caller-owned; null on failure).
///
/// # Safety
/// `cfg` must be live; `source` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vc_evaluate_baseline_json(
    cfg: *const VcConfig,
    source: *const c_char,
) -> *mut c_char {
    if cfg.is_null() || source.is_null() {
        set_error("null argument");
        return std::ptr::null_mut();
    }
    let source = match unsafe { CStr::from_ptr(source) }.to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("source is not valid utf-8");
            return std::ptr::null_mut();
        }
    };
    match eval_to_json(&unsafe { &*cfg }.inner, None, source) {
        Ok(json) => string_out(json),
        Err(e) => {
            fail(e);
            std::ptr::null_mut()
        }
    }
}
