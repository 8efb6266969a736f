//! C ABI over the `umatch` library.
//!
//! Every entry point returns a [`UmStatus`]. On failure the message is kept
//! per thread and can be read with [`um_last_error`]. Datasets and models
//! are opaque heap handles released with their `_free` function; passing
//! null to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ndarray::Array2;
use umatch::checkpoint::{Checkpoint, CheckpointMeta};
use umatch::cli::{self, Command, Fitted, Method, RunConfig};
use umatch::data::{self, CsvOptions, Dataset, NoiseProfile, TargetColumn};
use umatch::metrics::CalibrationReport;
use umatch::{Error, IntervalBatch};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Config = 5,
    Numeric = 6,
    Checkpoint = 7,
    Panic = 8,
}

/// A loaded dataset in raw units.
pub struct UmDataset {
    data: Dataset,
}

/// A trained or loaded model.
pub struct UmModel {
    fitted: Fitted,
    meta: CheckpointMeta,
    /// Held-out report from training; absent for loaded models.
    test_report: Option<CalibrationReport>,
}

/// Summary metrics. `rmse` and `aw` are in raw target units.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UmReport {
    pub alpha: f64,
    pub rmse: f64,
    pub ce: f64,
    pub coverage: f64,
    pub aw: f64,
    pub n_samples: usize,
}

impl From<&CalibrationReport> for UmReport {
    fn from(r: &CalibrationReport) -> Self {
        UmReport {
            alpha: r.alpha,
            rmse: r.rmse,
            ce: r.ce,
            coverage: r.coverage,
            aw: r.aw,
            n_samples: r.n_samples,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(UmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => UmStatus::Io,
            Error::Data(_) | Error::Csv(_) => UmStatus::Data,
            Error::Config(_) => UmStatus::Config,
            Error::Checkpoint { .. } | Error::Json(_) => UmStatus::Checkpoint,
            Error::Shape { .. } | Error::EmptyBatch(_) => UmStatus::InvalidArgument,
            _ => UmStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(UmStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(UmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            UmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            UmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn um_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn um_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a headed CSV whose last column is the target.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_dataset` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn um_dataset_load_csv(path: *const c_char, out_dataset: *mut *mut UmDataset) -> UmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let slot = out(out_dataset, "out_dataset")?;
        let data = data::load_csv(Path::new(path), &TargetColumn::default(), &CsvOptions::default())?;
        *slot = Box::into_raw(Box::new(UmDataset { data }));
        Ok(())
    })
}

/// Synthetic heteroscedastic data: `noise` 0 is linear, 1 sinusoidal.
///
/// # Safety
/// `out_dataset` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn um_dataset_synthetic(
    n: usize,
    seed: u64,
    dim: usize,
    noise: u32,
    out_dataset: *mut *mut UmDataset,
) -> UmStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let profile = match noise {
            0 => NoiseProfile::Linear,
            1 => NoiseProfile::Sinusoidal,
            other => return Err(invalid(format!("unknown noise profile {other}"))),
        };
        let data = data::synth_heteroscedastic(n, seed, profile, dim)?;
        *slot = Box::into_raw(Box::new(UmDataset { data }));
        Ok(())
    })
}

/// Row and feature counts.
///
/// # Safety
/// `dataset` must come from this library; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn um_dataset_shape(
    dataset: *const UmDataset,
    out_rows: *mut usize,
    out_features: *mut usize,
) -> UmStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        *out(out_rows, "out_rows")? = ds.data.len();
        *out(out_features, "out_features")? = ds.data.dim();
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn um_dataset_free(dataset: *mut UmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Splits `dataset` with `seed`, trains `method` at coverage `alpha`, and
/// evaluates on the held-out rows. `config` is null or `key = value` lines
/// using the CLI option names (e.g. `max_outer = 20`).
///
/// Methods: `sigma_fit`, `iqr_fit`, `hnn`, `quantile`, `mc_dropout`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn um_train(
    dataset: *const UmDataset,
    method: *const c_char,
    alpha: f64,
    seed: u64,
    config: *const c_char,
    out_model: *mut *mut UmModel,
) -> UmStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        let method: Method = str_arg(method, "method")?.parse()?;
        if method == Method::Oracle {
            return Err(invalid("the oracle method has no trainable model"));
        }
        let slot = out(out_model, "out_model")?;
        let mut cfg = RunConfig::defaults(Command::Train);
        if !config.is_null() {
            for (key, value) in cli::parse_config_text(str_arg(config, "config")?)? {
                cfg.set(&key, &value)?;
            }
        }
        cfg.alpha = alpha;
        cfg.validate()?;
        let split = data::split(&ds.data, cfg.train_fraction, seed)?;
        let fitted = cli::fit(&cfg, method, &split, alpha, seed)?;
        let report = fitted.report(&split.test, alpha)?;
        let meta = cli::meta_for(method, alpha, seed, &split);
        *slot = Box::into_raw(Box::new(UmModel {
            fitted,
            meta,
            test_report: Some(report),
        }));
        Ok(())
    })
}

/// Held-out metrics from training. Fails for a loaded model.
///
/// # Safety
/// `model` must come from this library; `out_report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn um_model_report(model: *const UmModel, out_report: *mut UmReport) -> UmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let report = m
            .test_report
            .as_ref()
            .ok_or_else(|| invalid("loaded models carry no training report; use um_model_evaluate"))?;
        *out(out_report, "out_report")? = report.into();
        Ok(())
    })
}

/// Re-expresses raw features under the model's feature scaling.
fn model_view(meta: &CheckpointMeta, features: Array2<f64>, raw_targets: Vec<f64>) -> Result<Dataset, Failure> {
    if features.ncols() != meta.feature_names.len() {
        return Err(invalid(format!(
            "model expects {} features, got {}",
            meta.feature_names.len(),
            features.ncols()
        )));
    }
    let t = meta.target_transform;
    Ok(Dataset {
        features: meta.scaler.transform(&features)?,
        targets: raw_targets.iter().map(|&v| t.apply(v)).collect(),
        raw_targets,
        feature_names: meta.feature_names.clone(),
        target_name: meta.target_name.clone(),
        target_transform: t,
        oracle: None,
    })
}

/// Metrics of the model on every row of `dataset`, at the trained level.
/// Features are matched by position.
///
/// # Safety
/// Handles must come from this library; `out_report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn um_model_evaluate(
    model: *const UmModel,
    dataset: *const UmDataset,
    out_report: *mut UmReport,
) -> UmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        let slot = out(out_report, "out_report")?;
        let view = model_view(&m.meta, ds.data.features.clone(), ds.data.raw_targets.clone())?;
        *slot = (&m.fitted.report(&view, m.meta.alpha)?).into();
        Ok(())
    })
}

/// Point predictions and interval bounds, in raw target units, for
/// `n_rows` row-major feature rows of width `n_features`. Each output
/// array holds `n_rows` values.
///
/// # Safety
/// `features` must hold `n_rows * n_features` values and each output
/// array `n_rows` values.
#[no_mangle]
pub unsafe extern "C" fn um_model_predict(
    model: *const UmModel,
    features: *const f64,
    n_rows: usize,
    n_features: usize,
    out_y_hat: *mut f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> UmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if n_rows == 0 {
            return Err(invalid("n_rows is 0"));
        }
        let len = n_rows
            .checked_mul(n_features)
            .ok_or_else(|| invalid("n_rows * n_features overflows"))?;
        let x = slice(features, len, "features")?;
        let y_hat_out = slice_mut(out_y_hat, n_rows, "out_y_hat")?;
        let lower_out = slice_mut(out_lower, n_rows, "out_lower")?;
        let upper_out = slice_mut(out_upper, n_rows, "out_upper")?;
        let x = Array2::from_shape_vec((n_rows, n_features), x.to_vec()).map_err(|e| invalid(e.to_string()))?;
        let view = model_view(&m.meta, x, vec![0.0; n_rows])?;
        let (y_hat, iv): (Vec<f64>, IntervalBatch) = m.fitted.predict(&view, m.meta.alpha)?;
        let t = m.meta.target_transform;
        for i in 0..n_rows {
            y_hat_out[i] = t.invert(y_hat[i]);
            lower_out[i] = t.invert(y_hat[i] - iv.delta_low[i]);
            upper_out[i] = t.invert(y_hat[i] + iv.delta_up[i]);
        }
        Ok(())
    })
}

/// Coverage level the model was trained for.
///
/// # Safety
/// `model` must come from this library; `out_alpha` must be valid.
#[no_mangle]
pub unsafe extern "C" fn um_model_alpha(model: *const UmModel, out_alpha: *mut f64) -> UmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out(out_alpha, "out_alpha")? = m.meta.alpha;
        Ok(())
    })
}

/// Number of outer training iterations recorded (0 for loaded models).
///
/// # Safety
/// `model` must come from this library; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn um_model_trace_len(model: *const UmModel, out_len: *mut usize) -> UmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out(out_len, "out_len")? = m.fitted.trace().len();
        Ok(())
    })
}

/// Writes a text checkpoint.
///
/// # Safety
/// `model` must come from this library; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn um_model_save(model: *const UmModel, path: *const c_char) -> UmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let path = str_arg(path, "path")?;
        m.fitted.checkpoint(m.meta.clone())?.save(Path::new(path))?;
        Ok(())
    })
}

/// Reads a checkpoint written by [`um_model_save`] or the CLI.
///
/// # Safety
/// `path` must be NUL-terminated and `out_model` valid.
#[no_mangle]
pub unsafe extern "C" fn um_model_load(path: *const c_char, out_model: *mut *mut UmModel) -> UmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let slot = out(out_model, "out_model")?;
        let ck = Checkpoint::load(Path::new(path))?;
        let fitted = Fitted::from_checkpoint(&ck)?;
        *slot = Box::into_raw(Box::new(UmModel {
            fitted,
            meta: ck.meta,
            test_report: None,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn um_model_free(model: *mut UmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Two-sided standard normal quantile: `P(|Z| <= z) = alpha`.
///
/// # Safety
/// `out_z` must be valid.
#[no_mangle]
pub unsafe extern "C" fn um_z_score(alpha: f64, out_z: *mut f64) -> UmStatus {
    guard(|| {
        let slot = out(out_z, "out_z")?;
        *slot = umatch::losses::z_score(alpha)?;
        Ok(())
    })
}

/// `|alpha - coverage|` of the intervals `[lower, upper]` over `n` samples.
///
/// # Safety
/// Each array must hold `n` values; `out_ce` must be valid.
#[no_mangle]
pub unsafe extern "C" fn um_calibration_error(
    y: *const f64,
    lower: *const f64,
    upper: *const f64,
    n: usize,
    alpha: f64,
    out_ce: *mut f64,
) -> UmStatus {
    guard(|| {
        let y = slice(y, n, "y")?;
        let lower = slice(lower, n, "lower")?;
        let upper = slice(upper, n, "upper")?;
        let slot = out(out_ce, "out_ce")?;
        if n == 0 {
            return Err(invalid("no samples"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("alpha {alpha} outside (0, 1)")));
        }
        let covered = (0..n).filter(|&i| lower[i] <= y[i] && y[i] <= upper[i]).count();
        *slot = (alpha - covered as f64 / n as f64).abs();
        Ok(())
    })
}
