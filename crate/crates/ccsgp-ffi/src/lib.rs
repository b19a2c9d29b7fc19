//! C ABI for fitting and querying the GP dynamics estimators.
//!
//! The interface follows the usual opaque-handle pattern: `ccsgp_fit`
//! produces a `CcsgpModel` pointer that later calls query and
//! `ccsgp_model_free` releases. Every entry point returns a `CcsgpStatus`
//! code (or a plain value for infallible queries), never unwinds across the
//! boundary, and checks every pointer for null before use. A thread-local
//! message string, readable through `ccsgp_last_error_message`, carries the
//! detail text of the most recent failure on the calling thread.
//!
//! Training data layout: trajectories are concatenated row-major into one
//! `double` array, each sample occupying `state_dim` consecutive values;
//! `lengths[k]` gives the number of samples of trajectory `k`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ccsgp::trajectory::TrajectorySet;
use ccsgp::{ccs_fit_md, ccs_fit_scalar, ni_fit, st_fit, Error, FitOptions, JointModel, TrainedGP};

/// Status code of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcsgpStatus {
    Ok = 0,
    /// A pointer argument was null.
    NullPointer = 1,
    /// Dimensions, lengths, or values were malformed.
    InvalidInput = 2,
    /// Covariance factorization failed at every rescue level.
    NotPositiveDefinite = 3,
    /// A numerical contract was violated during a query.
    NumericalError = 4,
    /// Hyperparameter search produced no usable candidate.
    FitFailed = 5,
    /// Simulated or fitted dynamics produced non-finite values.
    Divergence = 6,
    /// Any other library error.
    OtherError = 7,
    /// A panic was caught at the ABI boundary.
    Panic = 8,
}

/// Which estimator `ccsgp_fit` trains.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcsgpMethod {
    /// Standard GP regression, inputs treated as noise-free.
    St = 0,
    /// Noisy-input GP with slope-propagated input noise.
    Ni = 1,
    /// Consecutive-sample covariance estimator.
    Ccs = 2,
}

/// Fit budget and random seed; obtain defaults from
/// `ccsgp_fit_options_default` and override selectively.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CcsgpFitOptions {
    /// Slope/hyperparameter alternation rounds (NI and CCS).
    pub iterations: usize,
    /// Random restarts per optimization round.
    pub n_starts: usize,
    /// Simplex iteration cap per start.
    pub max_opt_iters: usize,
    /// Convergence tolerance on the objective spread.
    pub tol: f64,
    /// Seed for the optimizer's restart perturbations.
    pub seed: u64,
    /// Nonzero to pin the process noise variance at `process_var`.
    pub fix_process_var: i32,
    pub process_var: f64,
    /// Nonzero to pin the measurement noise variance at `measurement_var`.
    pub fix_measurement_var: i32,
    pub measurement_var: f64,
}

enum ModelKind {
    PerComponent(Vec<TrainedGP>),
    Scalar(TrainedGP),
    Joint(JointModel),
}

/// Opaque fitted model handle.
pub struct CcsgpModel {
    kind: ModelKind,
    state_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> CcsgpStatus {
    match err {
        Error::InvalidInput(_) => CcsgpStatus::InvalidInput,
        Error::NotPositiveDefinite { .. } => CcsgpStatus::NotPositiveDefinite,
        Error::Numerical(_) => CcsgpStatus::NumericalError,
        Error::Fit(_) => CcsgpStatus::FitFailed,
        Error::Divergence { .. } => CcsgpStatus::Divergence,
        _ => CcsgpStatus::OtherError,
    }
}

fn fail(err: &Error) -> CcsgpStatus {
    set_last_error(&err.to_string());
    status_of(err)
}

fn guard(body: impl FnOnce() -> CcsgpStatus) -> CcsgpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("panic caught at the C boundary");
            CcsgpStatus::Panic
        }
    }
}

fn to_fit_options(opts: Option<&CcsgpFitOptions>) -> FitOptions {
    match opts {
        None => FitOptions::default(),
        Some(o) => FitOptions {
            iterations: o.iterations,
            n_starts: o.n_starts,
            max_opt_iters: o.max_opt_iters,
            tol: o.tol,
            seed: o.seed,
            fix_process_var: (o.fix_process_var != 0).then_some(o.process_var),
            fix_measurement_var: (o.fix_measurement_var != 0).then_some(o.measurement_var),
        },
    }
}

/// Fill `out` with the library's default fit options.
///
/// # Safety
/// `out` must point to writable memory for one `CcsgpFitOptions`.
#[no_mangle]
pub unsafe extern "C" fn ccsgp_fit_options_default(out: *mut CcsgpFitOptions) -> CcsgpStatus {
    if out.is_null() {
        set_last_error("out is null");
        return CcsgpStatus::NullPointer;
    }
    let defaults = FitOptions::default();
    out.write(CcsgpFitOptions {
        iterations: defaults.iterations,
        n_starts: defaults.n_starts,
        max_opt_iters: defaults.max_opt_iters,
        tol: defaults.tol,
        seed: defaults.seed,
        fix_process_var: 0,
        process_var: 0.0,
        fix_measurement_var: 0,
        measurement_var: 0.0,
    });
    CcsgpStatus::Ok
}

/// Fit a one-step dynamics model on measured trajectories.
///
/// `states` holds all trajectories concatenated, sample-major: trajectory k
/// contributes `lengths[k] * state_dim` doubles. On success, `*out` owns the
/// fitted model and must be released with `ccsgp_model_free`.
///
/// # Safety
/// `states` must hold `sum(lengths) * state_dim` readable doubles,
/// `lengths` must hold `n_trajectories` readable entries, and `out` must be
/// writable. `options` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn ccsgp_fit(
    states: *const f64,
    n_trajectories: usize,
    lengths: *const usize,
    state_dim: usize,
    method: CcsgpMethod,
    options: *const CcsgpFitOptions,
    out: *mut *mut CcsgpModel,
) -> CcsgpStatus {
    if states.is_null() || lengths.is_null() || out.is_null() {
        set_last_error("states, lengths, and out must be non-null");
        return CcsgpStatus::NullPointer;
    }
    if n_trajectories == 0 || state_dim == 0 {
        set_last_error("need at least one trajectory and one state dimension");
        return CcsgpStatus::InvalidInput;
    }
    let lengths = std::slice::from_raw_parts(lengths, n_trajectories);
    let total: usize = lengths.iter().sum();
    let flat = std::slice::from_raw_parts(states, total * state_dim);
    guard(|| {
        let mut trajectories = Vec::with_capacity(n_trajectories);
        let mut offset = 0;
        for &len in lengths {
            let mut traj = Vec::with_capacity(len);
            for _ in 0..len {
                traj.push(flat[offset..offset + state_dim].to_vec());
                offset += state_dim;
            }
            trajectories.push(traj);
        }
        let traj = match TrajectorySet::new(trajectories) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        let opts = to_fit_options(options.as_ref());
        let kind = match method {
            CcsgpMethod::St | CcsgpMethod::Ni => {
                let fit_one = |j: usize| -> ccsgp::Result<TrainedGP> {
                    let data = traj.component_dataset(j)?;
                    match method {
                        CcsgpMethod::St => st_fit(&data, &opts),
                        _ => ni_fit(&data, &opts),
                    }
                };
                match (0..state_dim).map(fit_one).collect::<ccsgp::Result<Vec<_>>>() {
                    Ok(models) => ModelKind::PerComponent(models),
                    Err(e) => return fail(&e),
                }
            }
            CcsgpMethod::Ccs => {
                if state_dim == 1 {
                    match ccs_fit_scalar(&traj, &opts) {
                        Ok(m) => ModelKind::Scalar(m),
                        Err(e) => return fail(&e),
                    }
                } else {
                    match ccs_fit_md(&traj, &opts) {
                        Ok(m) => ModelKind::Joint(m),
                        Err(e) => return fail(&e),
                    }
                }
            }
        };
        let model = Box::new(CcsgpModel { kind, state_dim });
        out.write(Box::into_raw(model));
        CcsgpStatus::Ok
    })
}

/// Posterior mean, and optionally the posterior covariance, at one query
/// point. `mean_out` receives `state_dim` values; `cov_out`, when non-null,
/// receives `state_dim * state_dim` values row-major (ST and NI models are
/// per-component, so their covariance is diagonal).
///
/// # Safety
/// `model` must come from a successful `ccsgp_fit`; `x` must hold
/// `state_dim` readable doubles; `mean_out` must be writable for
/// `state_dim` doubles and `cov_out` for `state_dim * state_dim` when
/// non-null.
#[no_mangle]
pub unsafe extern "C" fn ccsgp_predict(
    model: *const CcsgpModel,
    x: *const f64,
    mean_out: *mut f64,
    cov_out: *mut f64,
) -> CcsgpStatus {
    if model.is_null() || x.is_null() || mean_out.is_null() {
        set_last_error("model, x, and mean_out must be non-null");
        return CcsgpStatus::NullPointer;
    }
    let model = &*model;
    let n = model.state_dim;
    let query = std::slice::from_raw_parts(x, n);
    let mean = std::slice::from_raw_parts_mut(mean_out, n);
    let cov = if cov_out.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(cov_out, n * n))
    };
    guard(move || {
        match &model.kind {
            ModelKind::PerComponent(models) => {
                for (j, m) in models.iter().enumerate() {
                    match m.posterior_mean(query) {
                        Ok(v) => mean[j] = v,
                        Err(e) => return fail(&e),
                    }
                }
                if let Some(cov) = cov {
                    cov.fill(0.0);
                    for (j, m) in models.iter().enumerate() {
                        match m.posterior_var(query) {
                            Ok(v) => cov[j * n + j] = v,
                            Err(e) => return fail(&e),
                        }
                    }
                }
            }
            ModelKind::Scalar(m) => {
                match m.posterior_mean(query) {
                    Ok(v) => mean[0] = v,
                    Err(e) => return fail(&e),
                }
                if let Some(cov) = cov {
                    match m.posterior_var(query) {
                        Ok(v) => cov[0] = v,
                        Err(e) => return fail(&e),
                    }
                }
            }
            ModelKind::Joint(m) => {
                match m.posterior_mean(query) {
                    Ok(v) => mean.copy_from_slice(v.as_slice()),
                    Err(e) => return fail(&e),
                }
                if let Some(cov) = cov {
                    match m.posterior_cov(query) {
                        Ok(c) => {
                            for j in 0..n {
                                for k in 0..n {
                                    cov[j * n + k] = c[(j, k)];
                                }
                            }
                        }
                        Err(e) => return fail(&e),
                    }
                }
            }
        }
        CcsgpStatus::Ok
    })
}

/// State dimension of a fitted model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from a successful `ccsgp_fit`.
#[no_mangle]
pub unsafe extern "C" fn ccsgp_model_state_dim(model: *const CcsgpModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).state_dim
    }
}

/// Release a fitted model. Null is accepted and ignored.
///
/// # Safety
/// `model` must be null or an owned pointer from `ccsgp_fit`, released at
/// most once.
#[no_mangle]
pub unsafe extern "C" fn ccsgp_model_free(model: *mut CcsgpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn ccsgp_strerror(status: CcsgpStatus) -> *const c_char {
    let text: &'static [u8] = match status {
        CcsgpStatus::Ok => b"ok\0",
        CcsgpStatus::NullPointer => b"null pointer argument\0",
        CcsgpStatus::InvalidInput => b"invalid input\0",
        CcsgpStatus::NotPositiveDefinite => b"covariance not positive definite\0",
        CcsgpStatus::NumericalError => b"numerical error\0",
        CcsgpStatus::FitFailed => b"fit failed\0",
        CcsgpStatus::Divergence => b"simulation diverged\0",
        CcsgpStatus::OtherError => b"library error\0",
        CcsgpStatus::Panic => b"internal panic\0",
    };
    text.as_ptr().cast()
}

/// Detail message of the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ccsgp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ccsgp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
