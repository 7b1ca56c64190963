//! C ABI over `pcdiff`.
//!
//! Models are loaded from checkpoints into opaque handles owned by the
//! caller and released with the matching `*_free`. Every fallible call
//! returns a [`PcdStatus`]; on failure a message is kept per thread and can
//! be read with [`pcd_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pcdiff::cli::checkpoint::Checkpoint;
use pcdiff::ddpm::DiffusionModel;
use pcdiff::guidance::GuidanceConfig;
use pcdiff::nn::Tensor;
use pcdiff::oracle::{run_verify, Suite};
use pcdiff::prefclassifier::PreferenceClassifier;
use pcdiff::Error;

/// Status codes. The first four match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcdStatus {
    Ok = 0,
    VerifyFailed = 1,
    InvalidArgument = 2,
    Io = 3,
    Numeric = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Trained noise-prediction model.
pub struct PcdDiffusion {
    inner: DiffusionModel,
}

/// Trained preference classifier.
pub struct PcdClassifier {
    inner: PreferenceClassifier,
}

/// Guidance settings for [`pcd_sample`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PcdGuidance {
    pub gamma: f64,
    pub max_resamples: usize,
    pub rejection_enabled: bool,
    pub unbounded: bool,
}

impl From<PcdGuidance> for GuidanceConfig {
    fn from(g: PcdGuidance) -> Self {
        GuidanceConfig {
            gamma: g.gamma,
            max_resamples: g.max_resamples,
            rejection_enabled: g.rejection_enabled,
            unbounded: g.unbounded,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> PcdStatus {
    match err {
        Error::Io(_) | Error::Format(_) => PcdStatus::Io,
        Error::Numeric { .. } => PcdStatus::Numeric,
        Error::InvalidArgument(_) | Error::Construction(_) | Error::Config { .. } => PcdStatus::InvalidArgument,
    }
}

struct Fail(PcdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PcdStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(PcdStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<PcdStatus, Fail>) -> PcdStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            PcdStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn bytes_arg<'a>(data: *const u8, len: usize) -> Result<&'a [u8], Fail> {
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn point_arg(x: *const f64, dim: usize, expected: usize) -> Result<Tensor, Fail> {
    if x.is_null() {
        return Err(null("x"));
    }
    if dim != expected {
        return Err(invalid(format!("point has dimension {dim}, model expects {expected}")));
    }
    Ok(Tensor::vector(std::slice::from_raw_parts(x, dim)))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<PcdStatus, Fail> {
    *out = Box::into_raw(Box::new(value));
    Ok(PcdStatus::Ok)
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pcd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn pcd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pcd_diffusion_load(path: *const c_char, out: *mut *mut PcdDiffusion) -> PcdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Checkpoint::load(path_arg(path)?)?.into_diffusion()?;
        store(out, PcdDiffusion { inner })
    })
}

/// Same as [`pcd_diffusion_load`] from an in-memory checkpoint.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pcd_diffusion_from_bytes(
    data: *const u8,
    len: usize,
    out: *mut *mut PcdDiffusion,
) -> PcdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Checkpoint::from_bytes(bytes_arg(data, len)?)?.into_diffusion()?;
        store(out, PcdDiffusion { inner })
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pcd_diffusion_free(model: *mut PcdDiffusion) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Data dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pcd_diffusion_data_dim(model: *const PcdDiffusion) -> usize {
    model.as_ref().map_or(0, |m| m.inner.data_dim())
}

/// Number of diffusion steps `T`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pcd_diffusion_steps(model: *const PcdDiffusion) -> usize {
    model.as_ref().map_or(0, |m| m.inner.schedule.steps())
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pcd_classifier_load(path: *const c_char, out: *mut *mut PcdClassifier) -> PcdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Checkpoint::load(path_arg(path)?)?.into_classifier()?;
        store(out, PcdClassifier { inner })
    })
}

/// # Safety
/// `data` must point to `len` readable bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pcd_classifier_from_bytes(
    data: *const u8,
    len: usize,
    out: *mut *mut PcdClassifier,
) -> PcdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Checkpoint::from_bytes(bytes_arg(data, len)?)?.into_classifier()?;
        store(out, PcdClassifier { inner })
    })
}

/// # Safety
/// `clf` must come from this library and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pcd_classifier_free(clf: *mut PcdClassifier) {
    if !clf.is_null() {
        drop(Box::from_raw(clf));
    }
}

/// Preference score `S(x)` in (0, 1) at timestep `t`.
///
/// # Safety
/// `x` must hold `dim` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pcd_classifier_score(
    clf: *const PcdClassifier,
    x: *const f64,
    dim: usize,
    t: usize,
    out: *mut f64,
) -> PcdStatus {
    guard(|| {
        let clf = &clf.as_ref().ok_or_else(|| null("classifier"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = point_arg(x, dim, clf.data_dim())?;
        *out = clf.score(&x, t)?;
        Ok(PcdStatus::Ok)
    })
}

/// Writes `log S(x)` to `out_log_score` (if non-null) and its gradient in
/// `x` to `out_grad`, which must hold `dim` values.
///
/// # Safety
/// `x` and `out_grad` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn pcd_classifier_log_score_grad(
    clf: *const PcdClassifier,
    x: *const f64,
    dim: usize,
    t: usize,
    out_grad: *mut f64,
    out_log_score: *mut f64,
) -> PcdStatus {
    guard(|| {
        let clf = &clf.as_ref().ok_or_else(|| null("classifier"))?.inner;
        if out_grad.is_null() {
            return Err(null("out_grad"));
        }
        let x = point_arg(x, dim, clf.data_dim())?;
        let g = clf.log_score_grad(&x, t)?;
        std::slice::from_raw_parts_mut(out_grad, dim).copy_from_slice(g.grad.data());
        if !out_log_score.is_null() {
            *out_log_score = clf.log_score(&x, t)?;
        }
        Ok(PcdStatus::Ok)
    })
}

/// Draws `n` samples into `out` (row-major, `n * data_dim` values).
///
/// A null `clf` gives plain DDPM samples and ignores `guidance`. Output is
/// identical for any `threads`; 0 or 1 runs on the calling thread. `out_resamples`, when
/// non-null, receives the total number of inversion retries.
///
/// # Safety
/// `out` must hold `out_len` values; `guidance` may be null for defaults.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn pcd_sample(
    model: *const PcdDiffusion,
    clf: *const PcdClassifier,
    guidance: *const PcdGuidance,
    seed: u64,
    n: usize,
    threads: usize,
    out: *mut f64,
    out_len: usize,
    out_resamples: *mut usize,
) -> PcdStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        let need = n * model.data_dim();
        if out_len < need {
            return Err(invalid(format!("output buffer holds {out_len} values, need {need}")));
        }
        let cfg = guidance.as_ref().map_or_else(GuidanceConfig::default, |g| (*g).into());
        let (samples, traces) =
            pcdiff::cli::pipeline::draw_samples(model, clf.as_ref().map(|c| &c.inner), &cfg, seed, n, threads)?;
        std::slice::from_raw_parts_mut(out, need).copy_from_slice(samples.data());
        if !out_resamples.is_null() {
            *out_resamples = traces.iter().map(|t| t.total_resamples()).sum();
        }
        Ok(PcdStatus::Ok)
    })
}

/// Runs a verification suite (`theorem1`, `theorem2`, `theorem3`,
/// `gradcheck` or `all`) and stores a JSON report in `out_json`, to be
/// released with [`pcd_string_free`]. Returns `VerifyFailed` (with the
/// report still written) when a check misses its tolerance.
///
/// # Safety
/// `suite` must be a NUL-terminated string and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn pcd_verify(suite: *const c_char, seed: u64, out_json: *mut *mut c_char) -> PcdStatus {
    guard(|| {
        if suite.is_null() {
            return Err(null("suite"));
        }
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let name = CStr::from_ptr(suite).to_str().map_err(|_| invalid("suite is not valid UTF-8"))?;
        let suite: Suite = name.parse()?;
        let report = run_verify(suite, seed)?;
        let json = serde_json::to_string(&report).map_err(|e| Fail(PcdStatus::Io, e.to_string()))?;
        *out_json = CString::new(json).map_err(|e| invalid(e.to_string()))?.into_raw();
        if report.passed {
            Ok(PcdStatus::Ok)
        } else {
            set_last_error(format!("failing suites: {}", report.failing_suites().join(", ")));
            Ok(PcdStatus::VerifyFailed)
        }
    })
}

/// # Safety
/// `s` must come from this library. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pcd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
