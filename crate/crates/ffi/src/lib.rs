//! C interface to `svaid`.
//!
//! Models and estimators are opaque handles created by `*_new`/`*_load`
//! functions and released with the matching `*_free`. Every call returns an
//! [`SvaidStatus`]; on failure [`svaid_last_error`] describes what went wrong
//! on the calling thread. Arrays are caller-allocated, matrices row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DVector;
use svaid::control::computed_torque;
use svaid::dynamics::{forward_dynamics, inverse_dynamics, JointState};
use svaid::identify::{
    fit, fit_with_prior, stack, BufferMode, EstimatorConfig, OnlineEstimator, Sample,
};
use svaid::io::{load_model, parse_model};
use svaid::model::{ChainModel, ThetaVector};
use svaid::regressor::compute_regressor;
use svaid::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvaidStatus {
    Ok = 0,
    InvalidArgument = 2,
    Runtime = 3,
    Degenerate = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque chain model.
pub struct SvaidModel(ChainModel);

/// Opaque online estimator.
pub struct SvaidEstimator(OnlineEstimator);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SvaidStatus {
    match e {
        Error::InvalidInput(_)
        | Error::IndexOutOfRange { .. }
        | Error::Dimension { .. }
        | Error::Parse { .. }
        | Error::Semantic { .. } => SvaidStatus::InvalidArgument,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            SvaidStatus::InvalidArgument
        }
        Error::Degenerate(_) => SvaidStatus::Degenerate,
        _ => SvaidStatus::Runtime,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SvaidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SvaidStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            SvaidStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            SvaidStatus::Panic
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn nonnull_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn read_vec(p: *const f64, len: usize, what: &'static str) -> Result<DVector<f64>, Fail> {
    if len == 0 {
        return Ok(DVector::zeros(0));
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(DVector::from_column_slice(std::slice::from_raw_parts(p, len)))
}

unsafe fn write_slice(p: *mut f64, values: &[f64], what: &'static str) -> Result<(), Fail> {
    if values.is_empty() {
        return Ok(());
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    std::slice::from_raw_parts_mut(p, values.len()).copy_from_slice(values);
    Ok(())
}

unsafe fn read_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidInput(format!("{what} is not UTF-8"))))
}

unsafe fn state(
    n: usize,
    q: *const f64,
    dq: *const f64,
    ddq: *const f64,
) -> Result<JointState, Fail> {
    Ok(JointState::new(
        read_vec(q, n, "q")?,
        read_vec(dq, n, "dq")?,
        read_vec(ddq, n, "ddq")?,
    )?)
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn svaid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn svaid_model_load(
    path: *const c_char,
    out: *mut *mut SvaidModel,
) -> SvaidStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        *out = ptr::null_mut();
        let model = load_model(Path::new(read_str(path, "path")?))?;
        *out = Box::into_raw(Box::new(SvaidModel(model)));
        Ok(())
    })
}

/// Parses model text.
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn svaid_model_parse(
    text: *const c_char,
    out: *mut *mut SvaidModel,
) -> SvaidStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        *out = ptr::null_mut();
        let model = parse_model(read_str(text, "text")?)?;
        *out = Box::into_raw(Box::new(SvaidModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` comes from this library and is not used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn svaid_model_free(model: *mut SvaidModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of joints, 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn svaid_model_dof(model: *const SvaidModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dof())
}

/// Parameters of the model, `10 · dof` values.
///
/// # Safety
/// `model` is a live handle; `out` holds `10 · dof` doubles.
#[no_mangle]
pub unsafe extern "C" fn svaid_model_theta(model: *const SvaidModel, out: *mut f64) -> SvaidStatus {
    guard(|| {
        let m = &nonnull(model, "model")?.0;
        write_slice(out, m.theta().values().as_slice(), "out")
    })
}

/// Regressor `Y(q, q̇, q̈)`, `dof × 10·dof`, row-major.
///
/// # Safety
/// `q`, `dq`, `ddq` hold `dof` doubles; `out` holds `10 · dof²`.
#[no_mangle]
pub unsafe extern "C" fn svaid_regressor(
    model: *const SvaidModel,
    q: *const f64,
    dq: *const f64,
    ddq: *const f64,
    out: *mut f64,
) -> SvaidStatus {
    guard(|| {
        let m = &nonnull(model, "model")?.0;
        let y = compute_regressor(m, &state(m.dof(), q, dq, ddq)?)?.matrix;
        let row_major: Vec<f64> = y.transpose().as_slice().to_vec();
        write_slice(out, &row_major, "out")
    })
}

/// Joint torques for the given motion.
///
/// # Safety
/// `q`, `dq`, `ddq`, `out` hold `dof` doubles.
#[no_mangle]
pub unsafe extern "C" fn svaid_inverse_dynamics(
    model: *const SvaidModel,
    q: *const f64,
    dq: *const f64,
    ddq: *const f64,
    out: *mut f64,
) -> SvaidStatus {
    guard(|| {
        let m = &nonnull(model, "model")?.0;
        let u = inverse_dynamics(m, &state(m.dof(), q, dq, ddq)?)?;
        write_slice(out, u.as_slice(), "out")
    })
}

/// Joint accelerations under torque `u`.
///
/// # Safety
/// `q`, `dq`, `u`, `out` hold `dof` doubles.
#[no_mangle]
pub unsafe extern "C" fn svaid_forward_dynamics(
    model: *const SvaidModel,
    q: *const f64,
    dq: *const f64,
    u: *const f64,
    out: *mut f64,
) -> SvaidStatus {
    guard(|| {
        let m = &nonnull(model, "model")?.0;
        let n = m.dof();
        let ddq = forward_dynamics(
            m,
            &read_vec(q, n, "q")?,
            &read_vec(dq, n, "dq")?,
            &read_vec(u, n, "u")?,
        )?;
        write_slice(out, ddq.as_slice(), "out")
    })
}

/// Torque that realizes `ddq_cmd` under the parameters `theta`
/// (`10 · dof` values). Unlimited.
///
/// # Safety
/// `q`, `dq`, `ddq_cmd`, `out` hold `dof` doubles; `theta` holds `10 · dof`.
#[no_mangle]
pub unsafe extern "C" fn svaid_computed_torque(
    model: *const SvaidModel,
    theta: *const f64,
    q: *const f64,
    dq: *const f64,
    ddq_cmd: *const f64,
    out: *mut f64,
) -> SvaidStatus {
    guard(|| {
        let m = &nonnull(model, "model")?.0;
        let n = m.dof();
        let theta = ThetaVector::new(read_vec(theta, m.num_params(), "theta")?)?;
        let cmd = computed_torque(
            m,
            &theta,
            &read_vec(q, n, "q")?,
            &read_vec(dq, n, "dq")?,
            &read_vec(ddq_cmd, n, "ddq_cmd")?,
            None,
        )?;
        write_slice(out, cmd.u.as_slice(), "out")
    })
}

/// Least-squares fit over `count` samples. `q`, `dq`, `ddq` and `u` are
/// `count × dof` row-major. With `theta0` non-null the fit is blended with
/// that prior at data weight `alpha`; otherwise `alpha` is ignored.
///
/// # Safety
/// Arrays hold `count · dof` doubles; `theta0` (if non-null) and
/// `theta_out` hold `10 · dof`; `r_squared_out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn svaid_fit(
    model: *const SvaidModel,
    count: usize,
    q: *const f64,
    dq: *const f64,
    ddq: *const f64,
    u: *const f64,
    theta0: *const f64,
    alpha: f64,
    theta_out: *mut f64,
    r_squared_out: *mut f64,
) -> SvaidStatus {
    guard(|| {
        let m = &nonnull(model, "model")?.0;
        let n = m.dof();
        let total = count
            .checked_mul(n)
            .ok_or_else(|| Fail::Lib(Error::InvalidInput("sample count overflows".into())))?;
        let (q, dq, ddq, u) = (
            read_vec(q, total, "q")?,
            read_vec(dq, total, "dq")?,
            read_vec(ddq, total, "ddq")?,
            read_vec(u, total, "u")?,
        );
        let rows = |v: &DVector<f64>, k: usize| v.rows(k * n, n).into_owned();
        let samples = (0..count)
            .map(|k| {
                Sample::new(
                    k as f64,
                    JointState::new(rows(&q, k), rows(&dq, k), rows(&ddq, k))?,
                    rows(&u, k),
                )
            })
            .collect::<svaid::Result<Vec<_>>>()?;
        let sys = stack(m, &samples)?;
        let result = if theta0.is_null() {
            fit(&sys)?
        } else {
            let prior = ThetaVector::new(read_vec(theta0, m.num_params(), "theta0")?)?;
            fit_with_prior(&sys, &prior, alpha)?
        };
        write_slice(theta_out, result.theta_hat.values().as_slice(), "theta_out")?;
        if let Some(r2) = r_squared_out.as_mut() {
            *r2 = result.r_squared;
        }
        Ok(())
    })
}

/// Online estimator with a ring buffer of `capacity` samples, admitting one
/// sample every `update_period` seconds. The model is copied.
///
/// # Safety
/// `theta0` holds `10 · dof` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn svaid_estimator_new(
    model: *const SvaidModel,
    theta0: *const f64,
    capacity: usize,
    update_period: f64,
    alpha: f64,
    r2_threshold: f64,
    out: *mut *mut SvaidEstimator,
) -> SvaidStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        *out = ptr::null_mut();
        let m = &nonnull(model, "model")?.0;
        let theta0 = ThetaVector::new(read_vec(theta0, m.num_params(), "theta0")?)?;
        let est = OnlineEstimator::new(
            m.clone(),
            theta0,
            EstimatorConfig {
                buffer: BufferMode::Ring { capacity },
                update_period,
                alpha,
                r2_threshold,
                gate: None,
            },
        )?;
        *out = Box::into_raw(Box::new(SvaidEstimator(est)));
        Ok(())
    })
}

/// # Safety
/// `est` comes from this library and is not used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn svaid_estimator_free(est: *mut SvaidEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Offers one measurement. `refitted` (if non-null) is set when the sample
/// was admitted and a new snapshot published.
///
/// # Safety
/// `q`, `dq`, `ddq`, `u` hold `dof` doubles.
#[no_mangle]
pub unsafe extern "C" fn svaid_estimator_update(
    est: *mut SvaidEstimator,
    t: f64,
    q: *const f64,
    dq: *const f64,
    ddq: *const f64,
    u: *const f64,
    refitted: *mut bool,
) -> SvaidStatus {
    guard(|| {
        let e = &mut nonnull_mut(est, "estimator")?.0;
        let n = e.model().dof();
        let sample = Sample::new(t, state(n, q, dq, ddq)?, read_vec(u, n, "u")?)?;
        let published = e.update(&sample)?.is_some();
        if let Some(r) = refitted.as_mut() {
            *r = published;
        }
        Ok(())
    })
}

/// Latest snapshot. Returns `SVAID_STATUS_DEGENERATE` before the first fit.
///
/// # Safety
/// `theta_out` holds `10 · dof` doubles; the other outputs are null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn svaid_estimator_latest(
    est: *const SvaidEstimator,
    theta_out: *mut f64,
    r_squared_out: *mut f64,
    model_valid_out: *mut bool,
) -> SvaidStatus {
    guard(|| {
        let e = &nonnull(est, "estimator")?.0;
        let snap = e
            .latest()
            .ok_or_else(|| Fail::Lib(Error::Degenerate("no snapshot published yet".into())))?;
        write_slice(theta_out, snap.fit.theta_hat.values().as_slice(), "theta_out")?;
        if let Some(r2) = r_squared_out.as_mut() {
            *r2 = snap.fit.r_squared;
        }
        if let Some(v) = model_valid_out.as_mut() {
            *v = snap.model_valid;
        }
        Ok(())
    })
}
