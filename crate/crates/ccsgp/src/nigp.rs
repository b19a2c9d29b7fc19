//! Noisy-input GP baseline: input noise is propagated onto the output
//! variance through the slopes of the posterior mean, inflating the
//! covariance diagonal point by point. Fitting alternates hyperparameter
//! optimization (slopes frozen) with slope recomputation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gp::{st_fit, Dataset, FitDiagnostics, MethodTag, TrainedGP};
use crate::kernel::{kernel_matrix, KernelHyperparams};
use crate::optimizer::{
    factorize_covariance, init_center, optimize_hyperparams, CovarianceModel, FitOptions,
    ParamLayout,
};

/// Per-point output variance: the input-noise contribution through the local
/// slope plus the lumped process-and-measurement noise.
pub fn ni_output_variance(slope: &[f64], hp: &KernelHyperparams) -> f64 {
    let slope_sq: f64 = slope.iter().map(|s| s * s).sum();
    hp.measurement_var() * slope_sq + hp.lumped_noise_var()
}

/// Training covariance of the noisy-input GP: kernel matrix plus a per-point
/// diagonal of `ni_output_variance`.
pub fn ni_covariance(
    hp: &KernelHyperparams,
    inputs: &[Vec<f64>],
    slopes: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = inputs.len();
    if slopes.nrows() != n || slopes.ncols() != hp.input_dim() {
        return Err(Error::invalid(format!(
            "slopes are {}x{}, expected {}x{}",
            slopes.nrows(),
            slopes.ncols(),
            n,
            hp.input_dim()
        )));
    }
    if slopes.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("slopes contain non-finite entries"));
    }
    let mut k = kernel_matrix(hp, inputs, inputs)?;
    for i in 0..n {
        let row: Vec<f64> = slopes.row(i).iter().copied().collect();
        k[(i, i)] += ni_output_variance(&row, hp);
    }
    Ok(k)
}

struct NiCovModel<'a> {
    inputs: &'a [Vec<f64>],
    slopes: &'a DMatrix<f64>,
}

impl CovarianceModel for NiCovModel<'_> {
    fn build(&self, hp: &KernelHyperparams, _beta: f64) -> Result<DMatrix<f64>> {
        ni_covariance(hp, self.inputs, self.slopes)
    }
}

/// Build a noisy-input model at fixed hyperparameters and slopes.
pub fn ni_model(
    dataset: Dataset,
    hp: KernelHyperparams,
    slopes: DMatrix<f64>,
) -> Result<TrainedGP> {
    let cov = ni_covariance(&hp, dataset.inputs(), &slopes)?;
    TrainedGP::from_covariance(hp, dataset, cov, MethodTag::Ni, Some(slopes))
}

/// Recompute the slope matrix: posterior-mean gradient at every training
/// input, one row per point.
pub(crate) fn slopes_at_inputs(model: &TrainedGP, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = model.hyperparams().input_dim();
    let mut slopes = DMatrix::zeros(inputs.len(), d);
    for (i, x) in inputs.iter().enumerate() {
        let g = model.posterior_mean_grad(x)?;
        for m in 0..d {
            slopes[(i, m)] = g[m];
        }
    }
    Ok(slopes)
}

/// Fit a noisy-input GP on one output component. Each pass optimizes the
/// hyperparameters with the slope matrix frozen, then refreshes the slopes
/// from the fitted posterior mean; slopes start at zero, so the first pass
/// is a standard fit with lumped noise.
///
/// Pinning the measurement variance to exactly zero makes every slope
/// contribution vanish, so the fit collapses to the standard path and is
/// guaranteed to match `st_fit` on the same options.
pub fn ni_fit(traj_dataset: &Dataset, opts: &FitOptions) -> Result<TrainedGP> {
    opts.validate()?;
    if opts.fix_measurement_var == Some(0.0) {
        let mut model = st_fit(traj_dataset, opts)?;
        model.set_method(MethodTag::Ni);
        let n = traj_dataset.len();
        let d = traj_dataset.input_dim();
        model.set_slopes(Some(DMatrix::zeros(n, d)));
        return Ok(model);
    }

    let d = traj_dataset.input_dim();
    let n = traj_dataset.len();
    let layout = ParamLayout::full(d, opts);
    let targets = traj_dataset.targets_vector();
    let center = init_center(traj_dataset.inputs(), &targets, &layout)?;

    let mut slopes = DMatrix::zeros(n, d);
    let mut warm: Option<KernelHyperparams> = None;
    let mut diag = FitDiagnostics::default();
    let mut fitted: Option<TrainedGP> = None;

    for round in 0..opts.iterations {
        let cov_model = NiCovModel {
            inputs: traj_dataset.inputs(),
            slopes: &slopes,
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
        let model = TrainedGP::from_parts(
            hp.clone(),
            traj_dataset.clone(),
            fc.cov,
            fc.factor,
            MethodTag::Ni,
            Some(slopes.clone()),
            FitDiagnostics::default(),
        );
        if round + 1 < opts.iterations {
            slopes = slopes_at_inputs(&model, traj_dataset.inputs())?;
        }
        warm = Some(hp);
        fitted = Some(model);
    }

    let mut model = fitted.expect("iterations >= 1 guarantees a fitted model");
    model.set_diagnostics(diag);
    Ok(model)
}
