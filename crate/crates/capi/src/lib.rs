//! C interface to the background estimator.
//!
//! The surface follows the usual C library conventions: opaque handles
//! created and freed by this library, integer status codes, and a
//! thread-local message retrievable with [`bgestim_last_error`] after a
//! failure. Frames are buffered as they are pushed and the pipeline runs
//! once [`bgestim_estimator_finish`] is called.
//!
//! Handles are not thread-safe; guard them externally if they must cross
//! threads. The generated header lives in `include/bgestim.h`.

#![warn(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::time::Instant;

use bgestim::frame_io::{FrameSequence, NodeGrid, Raster};
use bgestim::mrf::EstimateOutcome;
use bgestim::report::{RunReport, StageCounters};
use bgestim::{estimate_background, Error, EstimatorConfig};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgestimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Geometry = 3,
    InsufficientFrames = 4,
    Io = 5,
    Estimation = 6,
    Internal = 7,
}

/// Estimator settings. Create with `bgestim_config_new`, adjust with the
/// setters, and free with `bgestim_config_free`.
pub struct BgestimConfig {
    inner: EstimatorConfig,
}

/// Accumulates frames and estimates their static background.
pub struct BgestimEstimator {
    config: EstimatorConfig,
    width: u32,
    height: u32,
    sequence: FrameSequence,
    outcome: Option<EstimateOutcome>,
    runtime_ms: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(status: BgestimStatus, message: &str) -> BgestimStatus {
    let owned = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
    status
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_for(err: &Error) -> BgestimStatus {
    match err {
        Error::Geometry(_) => BgestimStatus::Geometry,
        Error::InsufficientFrames(_) => BgestimStatus::InsufficientFrames,
        Error::Config(_) => BgestimStatus::InvalidArgument,
        Error::Estimation(_) => BgestimStatus::Estimation,
        Error::Ingest { .. } | Error::Snapshot(_) | Error::Io { .. } => BgestimStatus::Io,
    }
}

fn fail(err: &Error) -> BgestimStatus {
    set_error(status_for(err), &err.to_string())
}

/// Runs `body` with a panic barrier so unwinding never crosses the FFI
/// boundary; a caught panic reports `Internal` through the last error.
fn guarded<T>(fallback: T, body: impl FnOnce() -> T) -> T {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(value) => value,
        Err(_) => {
            set_error(BgestimStatus::Internal, "internal panic");
            fallback
        }
    }
}

/// Library version string; static storage, do not free.
#[no_mangle]
pub extern "C" fn bgestim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on the calling thread, or
/// null if the last call succeeded. The pointer is valid until the next
/// call into this library from the same thread; do not free it.
#[no_mangle]
pub extern "C" fn bgestim_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

/// Creates a config holding the built-in defaults.
#[no_mangle]
pub extern "C" fn bgestim_config_new() -> *mut BgestimConfig {
    guarded(ptr::null_mut(), || {
        clear_error();
        Box::into_raw(Box::new(BgestimConfig {
            inner: EstimatorConfig::default(),
        }))
    })
}

/// Frees a config. A null pointer is ignored.
///
/// # Safety
/// `config` must be a pointer returned by `bgestim_config_new` that has
/// not already been freed.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_free(config: *mut BgestimConfig) {
    guarded((), || {
        if !config.is_null() {
            drop(unsafe { Box::from_raw(config) });
        }
    });
}

/// Applies one change to a config, keeping it unchanged when the result
/// would be invalid.
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
unsafe fn update_config(
    config: *mut BgestimConfig,
    apply: impl FnOnce(&mut EstimatorConfig),
) -> BgestimStatus {
    guarded(BgestimStatus::Internal, || {
        clear_error();
        let Some(config) = (unsafe { config.as_mut() }) else {
            return set_error(BgestimStatus::NullPointer, "config is null");
        };
        let mut candidate = config.inner.clone();
        apply(&mut candidate);
        if let Err(err) = candidate.validate() {
            return fail(&err);
        }
        config.inner = candidate;
        BgestimStatus::Ok
    })
}

/// Sets the block edge length in pixels (minimum 2).
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_set_block_size(
    config: *mut BgestimConfig,
    block_size: u32,
) -> BgestimStatus {
    unsafe { update_config(config, |c| c.block_size = block_size) }
}

/// Sets the correlation threshold for representative matching, in (0, 1).
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_set_t1(
    config: *mut BgestimConfig,
    t1: f64,
) -> BgestimStatus {
    unsafe { update_config(config, |c| c.t1 = t1) }
}

/// Pins the difference threshold to a fixed positive value, skipping the
/// automatic noise estimation.
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_set_t2(
    config: *mut BgestimConfig,
    t2: f64,
) -> BgestimStatus {
    unsafe { update_config(config, |c| c.t2_override = Some(t2)) }
}

/// Restores automatic difference-threshold estimation.
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_clear_t2(config: *mut BgestimConfig) -> BgestimStatus {
    unsafe { update_config(config, |c| c.t2_override = None) }
}

/// Caps the neighbour-count exponent of the smoothness prior.
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_set_eta_cap(
    config: *mut BgestimConfig,
    eta_cap: u32,
) -> BgestimStatus {
    unsafe { update_config(config, |c| c.gibbs.eta_cap = eta_cap) }
}

/// Sets the softmax temperature divisor of the prior (positive).
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_set_tau(
    config: *mut BgestimConfig,
    tau: f64,
) -> BgestimStatus {
    unsafe { update_config(config, |c| c.gibbs.tau = tau) }
}

/// Sets the evidence cap in seconds of observation (positive).
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_set_w_max_seconds(
    config: *mut BgestimConfig,
    w_max_seconds: f64,
) -> BgestimStatus {
    unsafe { update_config(config, |c| c.gibbs.w_max_seconds = w_max_seconds) }
}

/// Sets the ICM refinement iteration cap; 0 disables refinement.
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_set_icm_iterations(
    config: *mut BgestimConfig,
    icm_iterations: u32,
) -> BgestimStatus {
    unsafe { update_config(config, |c| c.gibbs.icm_iterations = icm_iterations) }
}

/// Enables or disables the multi-threaded clustering and refinement paths.
///
/// # Safety
/// `config` must be a live pointer from `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_config_set_parallel(
    config: *mut BgestimConfig,
    parallel: bool,
) -> BgestimStatus {
    unsafe { update_config(config, |c| c.parallel = parallel) }
}

/// Creates an estimator for `width` x `height` greyscale frames sampled at
/// `fps` frames per second. `config` may be null for the defaults; its
/// settings are copied, so it may be freed afterwards.
///
/// Returns null when the geometry or rate is unusable;
/// `bgestim_last_error` explains why.
///
/// # Safety
/// `config`, when non-null, must be a live pointer from
/// `bgestim_config_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_new(
    config: *const BgestimConfig,
    width: u32,
    height: u32,
    fps: f64,
) -> *mut BgestimEstimator {
    guarded(ptr::null_mut(), || {
        clear_error();
        let settings = match unsafe { config.as_ref() } {
            Some(config) => config.inner.clone(),
            None => EstimatorConfig::default(),
        };
        if !fps.is_finite() || fps <= 0.0 {
            set_error(
                BgestimStatus::InvalidArgument,
                &format!("fps must be positive, got {fps}"),
            );
            return ptr::null_mut();
        }
        // Geometry problems surface here rather than after frames arrive.
        if let Err(err) = NodeGrid::for_frame(width, height, settings.block_size) {
            fail(&err);
            return ptr::null_mut();
        }
        Box::into_raw(Box::new(BgestimEstimator {
            config: settings,
            width,
            height,
            sequence: FrameSequence::new(fps),
            outcome: None,
            runtime_ms: 0.0,
        }))
    })
}

/// Frees an estimator and everything it owns, including the background
/// buffer. A null pointer is ignored.
///
/// # Safety
/// `estimator` must be a pointer returned by `bgestim_estimator_new` that
/// has not already been freed.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_free(estimator: *mut BgestimEstimator) {
    guarded((), || {
        if !estimator.is_null() {
            drop(unsafe { Box::from_raw(estimator) });
        }
    });
}

/// Appends one frame of `width * height` bytes in row-major order. Frames
/// must be pushed in temporal order, before `bgestim_estimator_finish`.
///
/// # Safety
/// `estimator` must be a live pointer from `bgestim_estimator_new` and
/// `pixels` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_push_frame(
    estimator: *mut BgestimEstimator,
    pixels: *const u8,
    len: usize,
) -> BgestimStatus {
    guarded(BgestimStatus::Internal, || {
        clear_error();
        let Some(est) = (unsafe { estimator.as_mut() }) else {
            return set_error(BgestimStatus::NullPointer, "estimator is null");
        };
        if est.outcome.is_some() {
            return set_error(BgestimStatus::InvalidArgument, "estimator already finished");
        }
        if pixels.is_null() {
            return set_error(BgestimStatus::NullPointer, "pixels is null");
        }
        let expected = est.width as usize * est.height as usize;
        if len != expected {
            return set_error(
                BgestimStatus::Geometry,
                &format!("frame buffer is {len} bytes, expected {expected}"),
            );
        }
        let data = unsafe { slice::from_raw_parts(pixels, len) }.to_vec();
        let raster = Raster::new(est.width, est.height, data);
        match est.sequence.push(raster) {
            Ok(()) => BgestimStatus::Ok,
            Err(err) => fail(&err),
        }
    })
}

/// Runs the estimation pipeline over the buffered frames. On success the
/// background accessors and `bgestim_estimator_report_json` become
/// available and further pushes are rejected; on failure the buffered
/// frames are kept, so more can be pushed and finish retried.
///
/// # Safety
/// `estimator` must be a live pointer from `bgestim_estimator_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_finish(
    estimator: *mut BgestimEstimator,
) -> BgestimStatus {
    guarded(BgestimStatus::Internal, || {
        clear_error();
        let Some(est) = (unsafe { estimator.as_mut() }) else {
            return set_error(BgestimStatus::NullPointer, "estimator is null");
        };
        if est.outcome.is_some() {
            return set_error(BgestimStatus::InvalidArgument, "estimator already finished");
        }
        let started = Instant::now();
        match estimate_background(&est.sequence, &est.config) {
            Ok(outcome) => {
                est.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
                est.outcome = Some(outcome);
                BgestimStatus::Ok
            }
            Err(err) => fail(&err),
        }
    })
}

/// Reads from a finished estimator, reporting the usual errors through
/// `fallback` plus the last-error message.
///
/// # Safety
/// `estimator` must be a live pointer from `bgestim_estimator_new`.
unsafe fn with_background<T: Copy>(
    estimator: *const BgestimEstimator,
    fallback: T,
    read: impl FnOnce(&EstimateOutcome) -> T,
) -> T {
    guarded(fallback, || {
        clear_error();
        let Some(est) = (unsafe { estimator.as_ref() }) else {
            set_error(BgestimStatus::NullPointer, "estimator is null");
            return fallback;
        };
        match est.outcome.as_ref() {
            Some(outcome) => read(outcome),
            None => {
                set_error(BgestimStatus::InvalidArgument, "estimator has not finished");
                fallback
            }
        }
    })
}

/// Width of the estimated background in pixels, or 0 before a successful
/// finish. Inputs are cropped to whole blocks, so this may be smaller
/// than the frame width.
///
/// # Safety
/// `estimator` must be a live pointer from `bgestim_estimator_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_background_width(
    estimator: *const BgestimEstimator,
) -> u32 {
    unsafe { with_background(estimator, 0, |outcome| outcome.background.width()) }
}

/// Height of the estimated background in pixels, or 0 before a successful
/// finish.
///
/// # Safety
/// `estimator` must be a live pointer from `bgestim_estimator_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_background_height(
    estimator: *const BgestimEstimator,
) -> u32 {
    unsafe { with_background(estimator, 0, |outcome| outcome.background.height()) }
}

/// Borrowed pointer to the row-major background pixels, or null before a
/// successful finish. Valid until the estimator is freed.
///
/// # Safety
/// `estimator` must be a live pointer from `bgestim_estimator_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_background(
    estimator: *const BgestimEstimator,
) -> *const u8 {
    unsafe {
        with_background(estimator, ptr::null(), |outcome| {
            outcome.background.data().as_ptr()
        })
    }
}

/// Copies the background into `out`, which must hold exactly
/// `background_width * background_height` bytes.
///
/// # Safety
/// `estimator` must be a live pointer from `bgestim_estimator_new` and
/// `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_background_copy(
    estimator: *const BgestimEstimator,
    out: *mut u8,
    len: usize,
) -> BgestimStatus {
    guarded(BgestimStatus::Internal, || {
        clear_error();
        let Some(est) = (unsafe { estimator.as_ref() }) else {
            return set_error(BgestimStatus::NullPointer, "estimator is null");
        };
        let Some(outcome) = est.outcome.as_ref() else {
            return set_error(BgestimStatus::InvalidArgument, "estimator has not finished");
        };
        if out.is_null() {
            return set_error(BgestimStatus::NullPointer, "out is null");
        }
        let pixels = outcome.background.data();
        if len != pixels.len() {
            return set_error(
                BgestimStatus::Geometry,
                &format!("out is {len} bytes, background needs {}", pixels.len()),
            );
        }
        unsafe { ptr::copy_nonoverlapping(pixels.as_ptr(), out, pixels.len()) };
        BgestimStatus::Ok
    })
}

/// Serializes the run configuration and stage statistics as JSON. The
/// returned string must be freed with `bgestim_string_free`. Returns null
/// before a successful finish.
///
/// # Safety
/// `estimator` must be a live pointer from `bgestim_estimator_new`.
#[no_mangle]
pub unsafe extern "C" fn bgestim_estimator_report_json(
    estimator: *const BgestimEstimator,
) -> *mut c_char {
    guarded(ptr::null_mut(), || {
        clear_error();
        let Some(est) = (unsafe { estimator.as_ref() }) else {
            set_error(BgestimStatus::NullPointer, "estimator is null");
            return ptr::null_mut();
        };
        let Some(outcome) = est.outcome.as_ref() else {
            set_error(BgestimStatus::InvalidArgument, "estimator has not finished");
            return ptr::null_mut();
        };
        let mut report = RunReport::new("estimate");
        report.set_config("block_size", est.config.block_size);
        report.set_config("t1", est.config.t1);
        report.set_config("t2", est.config.t2_override);
        report.set_config("eta", est.config.gibbs.eta_cap);
        report.set_config("tau", est.config.gibbs.tau);
        report.set_config("w_max_seconds", est.config.gibbs.w_max_seconds);
        report.set_config("icm_iterations", est.config.gibbs.icm_iterations);
        report.set_config("parallel", est.config.parallel);
        report.set_config("fps", est.sequence.fps());
        report.set_config("t2_effective", outcome.stats.t2);
        report.stats = Some(StageCounters::from_stats(&outcome.stats));
        report.peak_model_bytes = Some(outcome.stats.peak_model_bytes as u64);
        report.runtime_ms = est.runtime_ms;
        if est.runtime_ms > 0.0 {
            report.frames_per_second = Some(outcome.stats.frames as f64 / (est.runtime_ms / 1e3));
        }
        match CString::new(report.to_json()) {
            Ok(json) => json.into_raw(),
            Err(_) => {
                set_error(BgestimStatus::Internal, "report contained a nul byte");
                ptr::null_mut()
            }
        }
    })
}

/// Frees a string returned by this library. A null pointer is ignored.
///
/// # Safety
/// `s` must be a pointer returned by `bgestim_estimator_report_json` that
/// has not already been freed.
#[no_mangle]
pub unsafe extern "C" fn bgestim_string_free(s: *mut c_char) {
    guarded((), || {
        if !s.is_null() {
            drop(unsafe { CString::from_raw(s) });
        }
    });
}
