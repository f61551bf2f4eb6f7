//! C ABI over `cdprkit`.
//!
//! Configurations and models are opaque heap handles released with their
//! `*_free` function. Every entry point returns a [`CdprStatus`]; on failure
//! a description is available from [`cdpr_last_error_message`] on the same
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cdprkit::fk_opt::{solve_fk_opt_best_effort, FkOptSettings};
use cdprkit::geometry::{bundled, inverse_kinematics, CableLengths, CdprConfig, Pose};
use cdprkit::graph::build_graph;
use cdprkit::nn::{Checkpoint, FkModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdprStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    SolverFailed = 4,
    Panic = 5,
}

/// Opaque robot configuration.
pub struct CdprConfigHandle {
    config: CdprConfig,
}

/// Opaque trained forward-kinematics model.
pub struct CdprModelHandle {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(CdprStatus, String);

impl Failure {
    fn invalid(msg: impl ToString) -> Self {
        Failure(CdprStatus::InvalidArgument, msg.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CdprStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            CdprStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            CdprStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(CdprStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn non_null<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure(CdprStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure(CdprStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn in_lengths(config: &CdprConfig, ptr: *const f64, len: usize) -> Result<CableLengths, Failure> {
    if ptr.is_null() {
        return Err(Failure(CdprStatus::NullPointer, "lengths is null".into()));
    }
    if len != config.cable_count() {
        return Err(Failure::invalid(format!("expected {} cable lengths, got {len}", config.cable_count())));
    }
    CableLengths::new(std::slice::from_raw_parts(ptr, len).to_vec()).map_err(Failure::invalid)
}

fn put_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(CdprStatus::NullPointer, "output handle is null".into()));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdpr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failing call on this thread, or an empty
/// string. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn cdpr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Look up a bundled configuration by case-insensitive name (e.g. `"SimC8"`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdpr_config_bundled(name: *const c_char, out: *mut *mut CdprConfigHandle) -> CdprStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        let config = bundled(name).map_err(Failure::invalid)?;
        put_handle(out, CdprConfigHandle { config })
    })
}

/// Load a configuration from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdpr_config_load(path: *const c_char, out: *mut *mut CdprConfigHandle) -> CdprStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let config = CdprConfig::load(path).map_err(|e| Failure(CdprStatus::Io, e.to_string()))?;
        put_handle(out, CdprConfigHandle { config })
    })
}

/// # Safety
/// `handle` must be null or come from a `cdpr_config_*` constructor and not
/// have been freed.
#[no_mangle]
pub unsafe extern "C" fn cdpr_config_free(handle: *mut CdprConfigHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live configuration; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdpr_config_cable_count(handle: *const CdprConfigHandle, out: *mut usize) -> CdprStatus {
    guard(|| {
        let h = non_null(handle, "config")?;
        if out.is_null() {
            return Err(Failure(CdprStatus::NullPointer, "out is null".into()));
        }
        *out = h.config.cable_count();
        Ok(())
    })
}

/// Cable lengths (mm) for `pose = [x, y, z, roll, pitch, yaw]`.
/// `lengths_len` must equal the cable count.
///
/// # Safety
/// `pose` must point to 6 doubles and `lengths` to `lengths_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cdpr_inverse_kinematics(
    handle: *const CdprConfigHandle,
    pose: *const f64,
    lengths: *mut f64,
    lengths_len: usize,
) -> CdprStatus {
    guard(|| {
        let config = &non_null(handle, "config")?.config;
        let pose = read_pose(pose)?;
        if lengths_len != config.cable_count() {
            return Err(Failure::invalid(format!("expected room for {} lengths, got {lengths_len}", config.cable_count())));
        }
        let out = out_slice(lengths, lengths_len, "lengths")?;
        out.copy_from_slice(inverse_kinematics(config, &pose).as_slice());
        Ok(())
    })
}

unsafe fn read_pose(ptr: *const f64) -> Result<Pose, Failure> {
    if ptr.is_null() {
        return Err(Failure(CdprStatus::NullPointer, "pose is null".into()));
    }
    let mut a = [0.0; 6];
    a.copy_from_slice(std::slice::from_raw_parts(ptr, 6));
    let pose = Pose::from_array(a);
    pose.validate().map_err(Failure::invalid)?;
    Ok(pose)
}

/// Forward kinematics by bounded Levenberg-Marquardt with the default bounds
/// for the configuration. Writes 6 pose values and, if non-null, the final
/// residual norm (mm). Returns `SolverFailed` if the iteration limit is hit
/// before convergence; the best iterate is still written.
///
/// # Safety
/// `lengths` must point to `lengths_len` doubles and `pose_out` to 6.
#[no_mangle]
pub unsafe extern "C" fn cdpr_solve_fk_opt(
    handle: *const CdprConfigHandle,
    lengths: *const f64,
    lengths_len: usize,
    pose_out: *mut f64,
    residual_out: *mut f64,
) -> CdprStatus {
    guard(|| {
        let config = &non_null(handle, "config")?.config;
        let target = in_lengths(config, lengths, lengths_len)?;
        let out = out_slice(pose_out, 6, "pose_out")?;
        let sol = solve_fk_opt_best_effort(config, &target, &FkOptSettings::for_config(config))
            .map_err(|e| Failure(CdprStatus::SolverFailed, e.to_string()))?;
        out.copy_from_slice(&sol.pose.to_array());
        if !residual_out.is_null() {
            *residual_out = sol.residual_norm;
        }
        if sol.converged {
            Ok(())
        } else {
            Err(Failure(CdprStatus::SolverFailed, format!("not converged, residual {:.3e} mm", sol.residual_norm)))
        }
    })
}

/// Load a model checkpoint written by `cdprkit train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdpr_model_load(path: *const c_char, out: *mut *mut CdprModelHandle) -> CdprStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let checkpoint = Checkpoint::load(path).map_err(|e| Failure(CdprStatus::Io, e.to_string()))?;
        put_handle(out, CdprModelHandle { checkpoint })
    })
}

/// # Safety
/// `handle` must be null or come from `cdpr_model_load` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cdpr_model_free(handle: *mut CdprModelHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Predict the pose for one set of cable lengths on the given configuration.
///
/// # Safety
/// Handles must be live; `lengths` must point to `lengths_len` doubles and
/// `pose_out` to 6.
#[no_mangle]
pub unsafe extern "C" fn cdpr_model_predict(
    model: *const CdprModelHandle,
    config: *const CdprConfigHandle,
    lengths: *const f64,
    lengths_len: usize,
    pose_out: *mut f64,
) -> CdprStatus {
    guard(|| {
        let model = &non_null(model, "model")?.checkpoint;
        let config = &non_null(config, "config")?.config;
        let target = in_lengths(config, lengths, lengths_len)?;
        let out = out_slice(pose_out, 6, "pose_out")?;
        let graph = build_graph(config, &target).map_err(Failure::invalid)?;
        let poses = match model {
            Checkpoint::Cafknet(m) => m.predict(&[&graph]),
            Checkpoint::MlpBaseline(m) => m.predict(&[&graph]),
        }
        .map_err(Failure::invalid)?;
        out.copy_from_slice(&poses[0].to_array());
        Ok(())
    })
}
