//! Consecutive-sample covariance for vector states.
//!
//! All state components are learned jointly under one shared kernel: the
//! training covariance over the stacked targets (time-major,
//! component-minor) is the Kronecker product of the kernel-plus-noise matrix
//! with the identity, plus a block-tridiagonal correction built from the
//! posterior-mean Jacobians. Shared measurement noise couples components at
//! equal times (Jacobian outer products on diagonal blocks) and neighboring
//! times within one trajectory (-measurement_var · Jacobian transpose on the
//! off-diagonal blocks).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{lml_from_factor, FitDiagnostics};
use crate::kernel::{kernel_eval, kernel_grad_input, kernel_matrix, KernelHyperparams};
use crate::linalg::PsdFactor;
use crate::optimizer::{
    factorize_covariance, init_center, optimize_hyperparams, CovarianceModel, FitOptions,
    ParamLayout,
};
use crate::trajectory::TrajectorySet;

fn check_jacobians(traj: &TrajectorySet, jacobians: &[DMatrix<f64>]) -> Result<()> {
    let n = traj.state_dim();
    if jacobians.len() != traj.num_pairs() {
        return Err(Error::invalid(format!(
            "{} Jacobians for {} training pairs",
            jacobians.len(),
            traj.num_pairs()
        )));
    }
    for (t, jac) in jacobians.iter().enumerate() {
        if jac.nrows() != n || jac.ncols() != n {
            return Err(Error::invalid(format!(
                "Jacobian {t} is {}x{}, expected {n}x{n}",
                jac.nrows(),
                jac.ncols()
            )));
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "Jacobian {t} has non-finite entries"
            )));
        }
    }
    Ok(())
}

pub(crate) fn ccs_covariance_md_damped(
    hp: &KernelHyperparams,
    traj: &TrajectorySet,
    jacobians: &[DMatrix<f64>],
    beta: f64,
) -> Result<DMatrix<f64>> {
    check_jacobians(traj, jacobians)?;
    let n = traj.state_dim();
    let big_n = traj.num_pairs();
    let inputs = traj.regression_inputs();
    let kx = kernel_matrix(hp, &inputs, &inputs)?;
    let r_var = hp.measurement_var();
    let lumped = hp.lumped_noise_var();

    let mut k = DMatrix::zeros(big_n * n, big_n * n);
    // (K_x + (measurement_var + process_var) I) ⊗ I_n.
    for t in 0..big_n {
        for s in 0..big_n {
            let base = kx[(t, s)] + if t == s { lumped } else { 0.0 };
            for j in 0..n {
                k[(t * n + j, s * n + j)] += base;
            }
        }
    }
    // Same-time coupling: measurement noise propagated through the local
    // Jacobian, measurement_var · J_t J_tᵀ.
    for (t, jac) in jacobians.iter().enumerate() {
        let block = jac * jac.transpose() * r_var;
        for j in 0..n {
            for m in 0..n {
                k[(t * n + j, t * n + m)] += block[(j, m)];
            }
        }
    }
    // Neighboring-time coupling within one trajectory: the later target's
    // input shares the noise sample of the earlier target's output.
    for (a, b) in traj.consecutive_pairs() {
        let jac_b = &jacobians[b];
        for j in 0..n {
            for m in 0..n {
                let correction = -beta * r_var * jac_b[(m, j)];
                k[(a * n + j, b * n + m)] += correction;
                k[(b * n + m, a * n + j)] += correction;
            }
        }
    }
    Ok(k)
}

/// Block training covariance over the stacked targets.
pub fn ccs_covariance_md(
    hp: &KernelHyperparams,
    traj: &TrajectorySet,
    jacobians: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    ccs_covariance_md_damped(hp, traj, jacobians, 1.0)
}

struct MdCovModel<'a> {
    traj: &'a TrajectorySet,
    jacobians: &'a [DMatrix<f64>],
}

impl CovarianceModel for MdCovModel<'_> {
    fn build(&self, hp: &KernelHyperparams, beta: f64) -> Result<DMatrix<f64>> {
        ccs_covariance_md_damped(hp, self.traj, self.jacobians, beta)
    }

    fn beta_rescue(&self) -> bool {
        true
    }
}

/// Jointly fitted multi-output model: one kernel shared by all state
/// components, posterior queries over the stacked training covariance.
pub struct JointModel {
    hyperparams: KernelHyperparams,
    inputs: Vec<Vec<f64>>,
    state_dim: usize,
    cov: DMatrix<f64>,
    factor: PsdFactor,
    alpha: DVector<f64>,
    jacobians: Vec<DMatrix<f64>>,
    lml: f64,
    diagnostics: FitDiagnostics,
}

impl JointModel {
    fn from_parts(
        hyperparams: KernelHyperparams,
        traj: &TrajectorySet,
        cov: DMatrix<f64>,
        factor: PsdFactor,
        jacobians: Vec<DMatrix<f64>>,
        diagnostics: FitDiagnostics,
    ) -> Self {
        let targets = traj.stacked_targets();
        let alpha = factor.solve_vec(&targets);
        let lml = lml_from_factor(&factor, &targets, &alpha);
        Self {
            hyperparams,
            inputs: traj.regression_inputs(),
            state_dim: traj.state_dim(),
            cov,
            factor,
            alpha,
            jacobians,
            lml,
            diagnostics,
        }
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hyperparams
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn diagnostics(&self) -> FitDiagnostics {
        self.diagnostics
    }

    pub fn training_covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Jacobians used in the training covariance, one per training input.
    pub fn jacobians(&self) -> &[DMatrix<f64>] {
        &self.jacobians
    }

    fn check_query(&self, x_star: &[f64]) -> Result<()> {
        if x_star.len() != self.state_dim {
            return Err(Error::invalid(format!(
                "query has dimension {}, model expects {}",
                x_star.len(),
                self.state_dim
            )));
        }
        Ok(())
    }

    fn cross_kernel(&self, x_star: &[f64]) -> Result<DVector<f64>> {
        let mut k = DVector::zeros(self.inputs.len());
        for (t, xt) in self.inputs.iter().enumerate() {
            k[t] = kernel_eval(&self.hyperparams, x_star, xt)?;
        }
        Ok(k)
    }

    /// Posterior mean of the next state at a query point.
    pub fn posterior_mean(&self, x_star: &[f64]) -> Result<DVector<f64>> {
        self.check_query(x_star)?;
        let k = self.cross_kernel(x_star)?;
        let n = self.state_dim;
        let mut mean = DVector::zeros(n);
        for (t, &kt) in k.iter().enumerate() {
            for j in 0..n {
                mean[j] += kt * self.alpha[t * n + j];
            }
        }
        Ok(mean)
    }

    /// Posterior covariance of the next state: symmetrized and eigenvalue-
    /// clamped at zero.
    pub fn posterior_cov(&self, x_star: &[f64]) -> Result<DMatrix<f64>> {
        self.check_query(x_star)?;
        let n = self.state_dim;
        let big_n = self.inputs.len();
        let k = self.cross_kernel(x_star)?;
        let k_star_star = kernel_eval(&self.hyperparams, x_star, x_star)?;

        // Columns of (k ⊗ I)ᵀ: column j has k_t at stacked row t·n + j.
        let mut rhs = DMatrix::zeros(big_n * n, n);
        for t in 0..big_n {
            for j in 0..n {
                rhs[(t * n + j, j)] = k[t];
            }
        }
        let solved = self.factor.solve_mat(&rhs);
        let mut cov = DMatrix::from_diagonal_element(n, n, k_star_star);
        for j in 0..n {
            for m in 0..n {
                let mut dot = 0.0;
                for t in 0..big_n {
                    dot += rhs[(t * n + j, j)] * solved[(t * n + j, m)];
                }
                cov[(j, m)] -= dot;
            }
        }

        let cov = (&cov + cov.transpose()) * 0.5;
        let eig = cov.symmetric_eigen();
        let mut values = eig.eigenvalues;
        for v in values.iter_mut() {
            if *v < -1e-10 {
                return Err(Error::Numerical(format!(
                    "posterior covariance eigenvalue {v:e} below clamp tolerance"
                )));
            }
            *v = v.max(0.0);
        }
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose())
    }

    /// Jacobian of the posterior mean at a query point: entry (j, m) is the
    /// derivative of output component j with respect to input dimension m.
    pub fn posterior_jacobian(&self, x_star: &[f64]) -> Result<DMatrix<f64>> {
        self.check_query(x_star)?;
        let n = self.state_dim;
        let mut jac = DMatrix::zeros(n, n);
        for (t, xt) in self.inputs.iter().enumerate() {
            let g = kernel_grad_input(&self.hyperparams, x_star, xt)?;
            for j in 0..n {
                let a = self.alpha[t * n + j];
                for m in 0..n {
                    jac[(j, m)] += g[m] * a;
                }
            }
        }
        Ok(jac)
    }

    /// Posterior mean and covariance in one call.
    pub fn predict(&self, x_star: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((self.posterior_mean(x_star)?, self.posterior_cov(x_star)?))
    }
}

/// Build a joint model at fixed hyperparameters and Jacobians, applying the
/// same indefiniteness rescue as during fitting.
pub fn ccs_model_md(
    traj: &TrajectorySet,
    hp: KernelHyperparams,
    jacobians: Vec<DMatrix<f64>>,
) -> Result<JointModel> {
    check_jacobians(traj, &jacobians)?;
    let cov_model = MdCovModel {
        traj,
        jacobians: &jacobians,
    };
    let mut diag = FitDiagnostics::default();
    let fc = factorize_covariance(&cov_model, &hp, &mut diag)?;
    Ok(JointModel::from_parts(
        hp, traj, fc.cov, fc.factor, jacobians, diag,
    ))
}

fn zero_jacobians(traj: &TrajectorySet) -> Vec<DMatrix<f64>> {
    let n = traj.state_dim();
    vec![DMatrix::zeros(n, n); traj.num_pairs()]
}

/// Fit the consecutive-sample estimator jointly over all state components.
/// Alternates shared-kernel hyperparameter optimization (Jacobians frozen)
/// with Jacobian recomputation from the joint posterior mean.
///
/// With the measurement variance pinned to exactly zero every correction
/// vanishes and the covariance is Jacobian-independent, so a single
/// optimization pass suffices and the Kronecker system decouples into
/// independent per-component regressions sharing one kernel.
pub fn ccs_fit_md(traj: &TrajectorySet, opts: &FitOptions) -> Result<JointModel> {
    opts.validate()?;
    let d = traj.state_dim();
    let layout = ParamLayout::full(d, opts);
    let targets = traj.stacked_targets();
    let inputs = traj.regression_inputs();
    let center = init_center(&inputs, &targets, &layout)?;

    let mut jacobians = zero_jacobians(traj);
    let mut warm: Option<KernelHyperparams> = None;
    let mut diag = FitDiagnostics::default();
    let mut fitted: Option<JointModel> = None;
    let rounds = if opts.fix_measurement_var == Some(0.0) {
        1
    } else {
        opts.iterations
    };

    for round in 0..rounds {
        let cov_model = MdCovModel {
            traj,
            jacobians: &jacobians,
        };
        let (hp, _) = optimize_hyperparams(
            &cov_model,
            &targets,
            &layout,
            &center,
            warm.as_ref(),
            opts,
            round,
            &mut diag,
        )?;
        let fc = factorize_covariance(&cov_model, &hp, &mut diag)?;
        let model = JointModel::from_parts(
            hp.clone(),
            traj,
            fc.cov,
            fc.factor,
            jacobians.clone(),
            FitDiagnostics::default(),
        );
        if round + 1 < rounds {
            jacobians = inputs
                .iter()
                .map(|x| model.posterior_jacobian(x))
                .collect::<Result<Vec<_>>>()?;
        }
        warm = Some(hp);
        fitted = Some(model);
    }

    let mut model = fitted.expect("at least one round always runs");
    model.diagnostics = diag;
    Ok(model)
}

/// Posterior mean and covariance of a fitted joint model.
pub fn ccs_predict_md(model: &JointModel, x_star: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    model.predict(x_star)
}

/// Jacobian of the joint posterior mean at a query point.
pub fn component_posterior_grad(model: &JointModel, x_star: &[f64]) -> Result<DMatrix<f64>> {
    model.posterior_jacobian(x_star)
}
