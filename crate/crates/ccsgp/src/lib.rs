//! Gaussian-process identification of discrete-time nonlinear dynamics from
//! noisy state trajectories.
//!
//! The crate learns one-step dynamics x(t+1) = f(x(t)) + w(t) from measured
//! trajectories x̃(t) = x(t) + r(t), where both process noise w and
//! measurement noise r are zero-mean Gaussian. Three estimators share one
//! squared-exponential kernel:
//!
//! - **ST**: exact GP regression treating inputs as noise-free.
//! - **NI**: noisy-input GP propagating input noise onto the covariance
//!   diagonal through posterior-mean slopes.
//! - **CCS**: consecutive-sample covariance, additionally modeling the
//!   correlation between neighboring regression targets created by the
//!   shared measurement noise sample, with corrections on the first
//!   off-diagonals (scalar states) or off-diagonal blocks (vector states).
//!
//! Benchmark dynamical systems, a noisy-trajectory generator, and a CLI
//! sweep harness reproduce the method-comparison experiments.

pub mod ccs;
pub mod ccs_md;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod nigp;
pub mod optimizer;
mod rng;
pub mod systems;
pub mod trajectory;

pub use ccs::{ccs_covariance_scalar, ccs_fit_scalar, ccs_model_scalar, ccs_predict_scalar};
pub use ccs_md::{
    ccs_covariance_md, ccs_fit_md, ccs_model_md, ccs_predict_md, component_posterior_grad,
    JointModel,
};
pub use error::{Error, Result};
pub use harness::{run_cell, run_sweep, ExperimentConfig, ExperimentResult, SweepReport};
pub use gp::{
    log_marginal_likelihood, st_covariance, st_fit, st_model, Dataset, FitDiagnostics, MethodTag,
    TrainedGP,
};
pub use kernel::{
    kernel_eval, kernel_grad_hyper, kernel_grad_input, kernel_matrix, KernelHyperparams,
};
pub use nigp::{ni_covariance, ni_fit, ni_model, ni_output_variance};
pub use optimizer::FitOptions;
pub use systems::{
    envelope_region, sample_test_points, simulate_trajectory, NoiseSpec, SystemSpec,
};
pub use trajectory::TrajectorySet;
