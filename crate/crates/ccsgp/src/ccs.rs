//! Consecutive-sample covariance for scalar states.
//!
//! The measured value x̃(t+1) is both the regression target at time t and
//! the regression input at time t+1, so its measurement noise correlates the
//! two neighboring targets. Beyond the noisy-input diagonal, the training
//! covariance therefore carries a -slope·measurement_var term on the first
//! off-diagonal for every pair of targets that are consecutive within one
//! trajectory. Pairs bridging two trajectories share no noise sample and get
//! no correction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gp::{st_fit, FitDiagnostics, MethodTag, TrainedGP};
use crate::kernel::{kernel_matrix, KernelHyperparams};
use crate::nigp::{ni_output_variance, slopes_at_inputs};
use crate::optimizer::{
    factorize_covariance, init_center, optimize_hyperparams, CovarianceModel, FitOptions,
    ParamLayout,
};
use crate::trajectory::TrajectorySet;

fn check_scalar(traj: &TrajectorySet) -> Result<()> {
    if traj.state_dim() != 1 {
        return Err(Error::invalid(format!(
            "scalar covariance requires state dimension 1, got {}",
            traj.state_dim()
        )));
    }
    Ok(())
}

pub(crate) fn ccs_covariance_scalar_damped(
    hp: &KernelHyperparams,
    traj: &TrajectorySet,
    slopes: &[f64],
    beta: f64,
) -> Result<DMatrix<f64>> {
    check_scalar(traj)?;
    let n = traj.num_pairs();
    if slopes.len() != n {
        return Err(Error::invalid(format!(
            "{} slopes for {} training pairs",
            slopes.len(),
            n
        )));
    }
    if slopes.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("slopes contain non-finite entries"));
    }
    let inputs = traj.regression_inputs();
    let mut k = kernel_matrix(hp, &inputs, &inputs)?;
    let r_var = hp.measurement_var();
    for t in 0..n {
        k[(t, t)] += ni_output_variance(&[slopes[t]], hp);
    }
    // The correction sits at the later target's slope: that target's input
    // carries the same noise sample the earlier target's output does.
    for (a, b) in traj.consecutive_pairs() {
        let correction = -beta * slopes[b] * r_var;
        k[(a, b)] += correction;
        k[(b, a)] += correction;
    }
    Ok(k)
}

/// Training covariance with consecutive-sample corrections: noisy-input
/// diagonal plus -slope·measurement_var on first off-diagonals of target
/// pairs that are consecutive within one trajectory.
pub fn ccs_covariance_scalar(
    hp: &KernelHyperparams,
    traj: &TrajectorySet,
    slopes: &[f64],
) -> Result<DMatrix<f64>> {
    ccs_covariance_scalar_damped(hp, traj, slopes, 1.0)
}

struct CcsCovModel<'a> {
    traj: &'a TrajectorySet,
    slopes: &'a [f64],
}

impl CovarianceModel for CcsCovModel<'_> {
    fn build(&self, hp: &KernelHyperparams, beta: f64) -> Result<DMatrix<f64>> {
        ccs_covariance_scalar_damped(hp, self.traj, self.slopes, beta)
    }

    fn beta_rescue(&self) -> bool {
        true
    }
}

fn slope_matrix(slopes: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(slopes.len(), 1, slopes)
}

/// Build a consecutive-sample model at fixed hyperparameters and slopes. If
/// the corrected covariance is indefinite, the off-diagonal corrections are
/// damped by the largest workable factor, as during fitting.
pub fn ccs_model_scalar(
    traj: &TrajectorySet,
    hp: KernelHyperparams,
    slopes: &[f64],
) -> Result<TrainedGP> {
    check_scalar(traj)?;
    let dataset = traj.component_dataset(0)?;
    let cov_model = CcsCovModel { traj, slopes };
    let mut diag = FitDiagnostics::default();
    let fc = factorize_covariance(&cov_model, &hp, &mut diag)?;
    Ok(TrainedGP::from_parts(
        hp,
        dataset,
        fc.cov,
        fc.factor,
        MethodTag::Ccs,
        Some(slope_matrix(slopes)),
        diag,
    ))
}

/// Fit the consecutive-sample estimator on scalar trajectories: the same
/// slope/hyperparameter alternation as the noisy-input fit, with the
/// corrected covariance. Pinning the measurement variance to exactly zero
/// removes every correction, so the fit collapses to the standard path.
pub fn ccs_fit_scalar(traj: &TrajectorySet, opts: &FitOptions) -> Result<TrainedGP> {
    opts.validate()?;
    check_scalar(traj)?;
    let dataset = traj.component_dataset(0)?;
    if opts.fix_measurement_var == Some(0.0) {
        let mut model = st_fit(&dataset, opts)?;
        model.set_method(MethodTag::Ccs);
        model.set_slopes(Some(DMatrix::zeros(dataset.len(), 1)));
        return Ok(model);
    }

    let n = dataset.len();
    let layout = ParamLayout::full(1, opts);
    let targets = dataset.targets_vector();
    let center = init_center(dataset.inputs(), &targets, &layout)?;

    let mut slopes = vec![0.0; n];
    let mut warm: Option<KernelHyperparams> = None;
    let mut diag = FitDiagnostics::default();
    let mut fitted: Option<TrainedGP> = None;

    for round in 0..opts.iterations {
        let cov_model = CcsCovModel {
            traj,
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
            dataset.clone(),
            fc.cov,
            fc.factor,
            MethodTag::Ccs,
            Some(slope_matrix(&slopes)),
            FitDiagnostics::default(),
        );
        if round + 1 < opts.iterations {
            let grads = slopes_at_inputs(&model, dataset.inputs())?;
            slopes = grads.column(0).iter().copied().collect();
        }
        warm = Some(hp);
        fitted = Some(model);
    }

    let mut model = fitted.expect("iterations >= 1 guarantees a fitted model");
    model.set_diagnostics(diag);
    Ok(model)
}

/// Posterior mean and variance of a fitted consecutive-sample model.
pub fn ccs_predict_scalar(model: &TrainedGP, x_star: &[f64]) -> Result<(f64, f64)> {
    Ok((model.posterior_mean(x_star)?, model.posterior_var(x_star)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{st_covariance, st_model};
    use crate::nigp::ni_covariance;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn hp(signal: f64, ls: f64, w: f64, r: f64) -> KernelHyperparams {
        KernelHyperparams::new(signal, vec![ls], w, r).unwrap()
    }

    #[test]
    fn zero_slopes_match_noisy_input_covariance() {
        let p = hp(1.2, 0.9, 0.01, 0.05);
        let traj = TrajectorySet::from_scalar(vec![vec![0.0, 0.4, 1.0, 1.3]]).unwrap();
        let slopes = vec![0.0; 3];
        let ccs = ccs_covariance_scalar(&p, &traj, &slopes).unwrap();
        let ni = ni_covariance(&p, &traj.regression_inputs(), &DMatrix::zeros(3, 1)).unwrap();
        assert_eq!(ccs, ni);
    }

    #[test]
    fn zero_measurement_noise_matches_standard_covariance() {
        let p = hp(1.2, 0.9, 0.03, 0.0);
        let traj = TrajectorySet::from_scalar(vec![vec![0.0, 0.4, 1.0, 1.3, 2.0]]).unwrap();
        let slopes = vec![0.7, -1.1, 0.2, 0.9];
        let ccs = ccs_covariance_scalar(&p, &traj, &slopes).unwrap();
        let st = st_covariance(&p, &traj.regression_inputs()).unwrap();
        assert_eq!(ccs, st);
    }

    #[test]
    fn entries_match_hand_assembled_three_point_matrix() {
        let p = hp(1.5, 1.1, 0.02, 0.08);
        let xs = vec![0.0, 0.6, 1.0, 1.8];
        let traj = TrajectorySet::from_scalar(vec![xs.clone()]).unwrap();
        let slopes = vec![0.4, -0.9, 1.2];
        let k = ccs_covariance_scalar(&p, &traj, &slopes).unwrap();

        let kern = |a: f64, b: f64| crate::kernel::kernel_eval(&p, &[a], &[b]).unwrap();
        for t in 0..3 {
            let want = kern(xs[t], xs[t]) + 0.08 * slopes[t] * slopes[t] + 0.02 + 0.08;
            assert_relative_eq!(k[(t, t)], want, epsilon = 1e-14);
        }
        for t in 0..2 {
            let want = kern(xs[t], xs[t + 1]) - slopes[t + 1] * 0.08;
            assert_relative_eq!(k[(t, t + 1)], want, epsilon = 1e-14);
            assert_relative_eq!(k[(t + 1, t)], want, epsilon = 1e-14);
        }
        assert_relative_eq!(k[(0, 2)], kern(xs[0], xs[2]), epsilon = 1e-14);
    }

    #[test]
    fn boundary_pairs_carry_no_correction() {
        // Two trajectories of two samples each: one target per trajectory.
        // The (0, 1) entry bridges the trajectories and must be the pure
        // kernel value even though the targets are adjacent in the matrix.
        let p = hp(1.0, 1.0, 0.01, 0.5);
        let traj = TrajectorySet::from_scalar(vec![vec![0.0, 0.5], vec![0.6, 1.2]]).unwrap();
        let slopes = vec![2.0, 3.0];
        let k = ccs_covariance_scalar(&p, &traj, &slopes).unwrap();
        let pure = crate::kernel::kernel_eval(&p, &[0.0], &[0.6]).unwrap();
        assert_eq!(k[(0, 1)], pure);
        assert_eq!(k[(1, 0)], pure);
    }

    #[test]
    fn correction_is_tridiagonal_with_gaps() {
        let p = hp(1.1, 0.8, 0.01, 0.2);
        let traj = TrajectorySet::from_scalar(vec![
            vec![0.0, 0.3, 0.9, 1.4],
            vec![2.0, 2.2, 2.7],
        ])
        .unwrap();
        let n = traj.num_pairs();
        let slopes: Vec<f64> = (0..n).map(|i| 0.5 + 0.3 * i as f64).collect();
        let k = ccs_covariance_scalar(&p, &traj, &slopes).unwrap();
        let inputs = traj.regression_inputs();
        let pure = kernel_matrix(&p, &inputs, &inputs).unwrap();
        let diff = &k - &pure;

        let corrected: Vec<(usize, usize)> = traj.consecutive_pairs();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    assert!(diff[(i, i)] > 0.0);
                } else if corrected.contains(&(i.min(j), i.max(j))) && i.abs_diff(j) == 1 {
                    assert!(diff[(i, j)] != 0.0);
                } else {
                    assert_eq!(diff[(i, j)], 0.0, "unexpected correction at ({i},{j})");
                }
            }
        }
        assert_eq!(corrected.len(), (4 - 1 - 1) + (3 - 1 - 1));
    }

    #[test]
    fn symmetry_is_exact() {
        let p = hp(0.9, 1.3, 0.005, 0.3);
        let traj =
            TrajectorySet::from_scalar(vec![vec![0.1, 0.5, 0.2, 0.9, 1.5, 1.1]]).unwrap();
        let slopes = vec![1.0, -2.0, 0.5, 3.0, -1.5];
        let k = ccs_covariance_scalar(&p, &traj, &slopes).unwrap();
        assert_eq!(k, k.transpose());
    }

    #[test]
    fn fixed_hp_posterior_matches_explicit_inverse() {
        let p = hp(1.4, 1.0, 0.02, 0.1);
        let traj = TrajectorySet::from_scalar(vec![vec![0.0, 0.5, 1.1, 1.7]]).unwrap();
        let slopes = vec![0.8, 0.6, 0.4];
        let model = ccs_model_scalar(&traj, p.clone(), &slopes).unwrap();

        let k = ccs_covariance_scalar(&p, &traj, &slopes).unwrap();
        let inv = k.try_inverse().unwrap();
        let y = DVector::from_vec(vec![0.5, 1.1, 1.7]);
        let x_star = [0.8];
        let kv = DVector::from_fn(3, |i, _| {
            crate::kernel::kernel_eval(&p, &x_star, &traj.regression_inputs()[i]).unwrap()
        });
        let want_mean = kv.dot(&(&inv * &y));
        let want_var =
            crate::kernel::kernel_eval(&p, &x_star, &x_star).unwrap() - kv.dot(&(&inv * &kv));

        let (mean, var) = ccs_predict_scalar(&model, &x_star).unwrap();
        assert_relative_eq!(mean, want_mean, epsilon = 1e-10);
        assert_relative_eq!(var, want_var, epsilon = 1e-10);
    }

    #[test]
    fn far_query_returns_prior() {
        let p = hp(2.5, 1.0, 0.02, 0.1);
        let traj = TrajectorySet::from_scalar(vec![vec![0.0, 0.5, 1.1]]).unwrap();
        let slopes = vec![0.3, 0.3];
        let model = ccs_model_scalar(&traj, p, &slopes).unwrap();
        let (mean, var) = ccs_predict_scalar(&model, &[60.0]).unwrap();
        assert!(mean.abs() < 1e-6 * 2.5f64.sqrt());
        assert_relative_eq!(var, 2.5, epsilon = 1e-6);
    }

    #[test]
    fn pinned_zero_measurement_matches_standard_fit() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let traj = TrajectorySet::from_scalar(vec![xs]).unwrap();
        let opts = FitOptions {
            n_starts: 2,
            max_opt_iters: 60,
            fix_measurement_var: Some(0.0),
            ..FitOptions::default()
        };
        let ccs = ccs_fit_scalar(&traj, &opts).unwrap();
        let st = st_fit(&traj.component_dataset(0).unwrap(), &opts).unwrap();
        assert_eq!(ccs.method(), MethodTag::Ccs);
        assert_eq!(
            ccs.log_marginal_likelihood().to_bits(),
            st.log_marginal_likelihood().to_bits()
        );
        let q = [0.4];
        assert_eq!(
            ccs.posterior_mean(&q).unwrap().to_bits(),
            st.posterior_mean(&q).unwrap().to_bits()
        );
        assert_eq!(
            ccs.posterior_var(&q).unwrap().to_bits(),
            st.posterior_var(&q).unwrap().to_bits()
        );
    }

    #[test]
    fn zeroed_corrections_match_standard_posterior() {
        // With zero slopes and equal lumped noise, the corrected model and a
        // standard model at matching hyperparameters agree everywhere.
        let traj = TrajectorySet::from_scalar(vec![vec![0.0, 0.4, 0.9, 1.5, 2.2]]).unwrap();
        let p_ccs = hp(1.2, 0.8, 0.04, 0.0);
        let model = ccs_model_scalar(&traj, p_ccs.clone(), &[1.0, -1.0, 2.0, 0.5]).unwrap();
        let st = st_model(traj.component_dataset(0).unwrap(), p_ccs).unwrap();
        for q in [0.2, 0.7, 1.0, 3.0] {
            assert_relative_eq!(
                model.posterior_mean(&[q]).unwrap(),
                st.posterior_mean(&[q]).unwrap(),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                model.posterior_var(&[q]).unwrap(),
                st.posterior_var(&[q]).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn slope_count_mismatch_rejected() {
        let p = hp(1.0, 1.0, 0.01, 0.1);
        let traj = TrajectorySet::from_scalar(vec![vec![0.0, 0.5, 1.0]]).unwrap();
        assert!(ccs_covariance_scalar(&p, &traj, &[0.1]).is_err());
        let md = TrajectorySet::new(vec![vec![vec![0.0, 0.0], vec![1.0, 1.0]]]).unwrap();
        assert!(ccs_covariance_scalar(&p, &md, &[0.1]).is_err());
    }
}
