//! Squared-exponential kernel with per-dimension lengthscales.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Hyperparameters of a squared-exponential kernel plus the two noise
/// variances used throughout the toolkit.
///
/// `signal_var` is the kernel amplitude, `lengthscales` holds one positive
/// lengthscale per input dimension, `process_var` is the variance of the
/// process noise entering the state transition, and `measurement_var` is the
/// variance of the noise on each measured sample.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHyperparams {
    signal_var: f64,
    lengthscales: Vec<f64>,
    process_var: f64,
    measurement_var: f64,
}

impl KernelHyperparams {
    pub fn new(
        signal_var: f64,
        lengthscales: Vec<f64>,
        process_var: f64,
        measurement_var: f64,
    ) -> Result<Self> {
        if !(signal_var.is_finite() && signal_var > 0.0) {
            return Err(Error::invalid(format!(
                "signal variance must be positive and finite, got {signal_var}"
            )));
        }
        if lengthscales.is_empty() {
            return Err(Error::invalid("at least one lengthscale is required"));
        }
        for (m, &l) in lengthscales.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!(
                    "lengthscale {m} must be positive and finite, got {l}"
                )));
            }
        }
        if !(process_var.is_finite() && process_var >= 0.0) {
            return Err(Error::invalid(format!(
                "process variance must be nonnegative and finite, got {process_var}"
            )));
        }
        if !(measurement_var.is_finite() && measurement_var >= 0.0) {
            return Err(Error::invalid(format!(
                "measurement variance must be nonnegative and finite, got {measurement_var}"
            )));
        }
        Ok(Self {
            signal_var,
            lengthscales,
            process_var,
            measurement_var,
        })
    }

    pub fn signal_var(&self) -> f64 {
        self.signal_var
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn process_var(&self) -> f64 {
        self.process_var
    }

    pub fn measurement_var(&self) -> f64 {
        self.measurement_var
    }

    pub fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Total noise variance seen by a regression target: process noise plus
    /// measurement noise on the outgoing sample.
    pub fn lumped_noise_var(&self) -> f64 {
        self.process_var + self.measurement_var
    }
}

fn check_dim(params: &KernelHyperparams, x: &[f64], name: &str) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(Error::invalid(format!(
            "{name} has dimension {}, kernel expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// k(a, b) = signal_var * exp(-1/2 * sum_m ((a_m - b_m) / lengthscale_m)^2).
pub fn kernel_eval(params: &KernelHyperparams, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(params, a, "first input")?;
    check_dim(params, b, "second input")?;
    let mut quad = 0.0;
    for m in 0..a.len() {
        let scaled = (a[m] - b[m]) / params.lengthscales[m];
        quad += scaled * scaled;
    }
    Ok(params.signal_var * (-0.5 * quad).exp())
}

/// Cross-covariance matrix with rows indexed by `rows` and columns by `cols`.
///
/// When both arguments are the same slice the matrix is filled from its upper
/// triangle, which both halves the kernel evaluations and makes the result
/// exactly symmetric.
pub fn kernel_matrix(
    params: &KernelHyperparams,
    rows: &[Vec<f64>],
    cols: &[Vec<f64>],
) -> Result<DMatrix<f64>> {
    let same = std::ptr::eq(rows, cols);
    let mut k = DMatrix::zeros(rows.len(), cols.len());
    if same {
        for i in 0..rows.len() {
            for j in i..rows.len() {
                let v = kernel_eval(params, &rows[i], &rows[j])?;
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
    } else {
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                k[(i, j)] = kernel_eval(params, r, c)?;
            }
        }
    }
    Ok(k)
}

/// Gradient of k(a, b) with respect to the first argument `a`.
///
/// Component m is -(a_m - b_m) / lengthscale_m^2 * k(a, b).
pub fn kernel_grad_input(params: &KernelHyperparams, a: &[f64], b: &[f64]) -> Result<DVector<f64>> {
    let k = kernel_eval(params, a, b)?;
    let mut g = DVector::zeros(a.len());
    for m in 0..a.len() {
        let l2 = params.lengthscales[m] * params.lengthscales[m];
        g[m] = -(a[m] - b[m]) / l2 * k;
    }
    Ok(g)
}

/// Derivatives of the kernel matrix over `points` with respect to the log of
/// each kernel hyperparameter.
///
/// Returns one matrix per parameter in the order: log signal variance, then
/// log lengthscale for each input dimension. Noise variances do not enter the
/// noise-free kernel matrix, so their derivatives are handled by the callers
/// that add noise terms.
pub fn kernel_grad_hyper(
    params: &KernelHyperparams,
    points: &[Vec<f64>],
) -> Result<Vec<DMatrix<f64>>> {
    let k = kernel_matrix(params, points, points)?;
    let n = points.len();
    let mut grads = Vec::with_capacity(1 + params.input_dim());
    // d k / d log(signal_var) = k itself.
    grads.push(k.clone());
    for m in 0..params.input_dim() {
        let l2 = params.lengthscales[m] * params.lengthscales[m];
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let d = points[i][m] - points[j][m];
                // d k / d log(l_m) = k * d^2 / l_m^2.
                let v = k[(i, j)] * d * d / l2;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        grads.push(g);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(signal_var: f64, ls: &[f64]) -> KernelHyperparams {
        KernelHyperparams::new(signal_var, ls.to_vec(), 0.0, 0.0).unwrap()
    }

    #[test]
    fn unit_distance_single_lengthscale() {
        let p = params(1.0, &[1.0]);
        let k = kernel_eval(&p, &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(k, (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(k, 0.6065306597126334, epsilon = 1e-15);
    }

    #[test]
    fn root_two_distance_gives_exp_minus_one() {
        let p = params(1.0, &[1.0]);
        let k = kernel_eval(&p, &[0.0], &[2.0f64.sqrt()]).unwrap();
        assert_relative_eq!(k, (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(k, 0.36787944117144233, epsilon = 1e-15);
    }

    #[test]
    fn linear_in_signal_variance() {
        let a = [0.3, -0.8];
        let b = [1.2, 0.4];
        let k1 = kernel_eval(&params(1.0, &[0.9, 1.4]), &a, &b).unwrap();
        let k2 = kernel_eval(&params(2.0, &[0.9, 1.4]), &a, &b).unwrap();
        assert_relative_eq!(k2, 2.0 * k1, epsilon = 1e-15);
    }

    #[test]
    fn grad_input_zero_at_equal_points_and_antisymmetric() {
        let p = params(1.5, &[0.8, 1.1]);
        let g0 = kernel_grad_input(&p, &[0.4, 0.2], &[0.4, 0.2]).unwrap();
        assert!(g0.iter().all(|&v| v == 0.0));

        let a = [0.4, -0.6];
        let b = [1.1, 0.3];
        let ga = kernel_grad_input(&p, &a, &b).unwrap();
        let gb = kernel_grad_input(&p, &b, &a).unwrap();
        for m in 0..2 {
            assert_relative_eq!(ga[m], -gb[m], epsilon = 1e-15);
        }
    }

    #[test]
    fn diagonal_equals_signal_variance() {
        let p = params(2.5, &[0.7, 1.3]);
        let k = kernel_eval(&p, &[0.4, -1.1], &[0.4, -1.1]).unwrap();
        assert_relative_eq!(k, 2.5, epsilon = 1e-15);
    }

    #[test]
    fn ard_weights_each_dimension() {
        let p = params(3.0, &[1.0, 2.0]);
        let k = kernel_eval(&p, &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        // quad = 1 + 1 = 2, so k = 3 * exp(-1).
        assert_relative_eq!(k, 3.0 * (-1.0f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(k, 1.1036383235143269, epsilon = 1e-14);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = params(1.0, &[1.0, 1.0]);
        assert!(kernel_eval(&p, &[0.0], &[0.0, 0.0]).is_err());
        assert!(kernel_eval(&p, &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn invalid_hyperparams_rejected() {
        assert!(KernelHyperparams::new(0.0, vec![1.0], 0.0, 0.0).is_err());
        assert!(KernelHyperparams::new(1.0, vec![], 0.0, 0.0).is_err());
        assert!(KernelHyperparams::new(1.0, vec![-1.0], 0.0, 0.0).is_err());
        assert!(KernelHyperparams::new(1.0, vec![1.0], -0.1, 0.0).is_err());
        assert!(KernelHyperparams::new(1.0, vec![1.0], 0.0, f64::NAN).is_err());
    }

    #[test]
    fn matrix_matches_pairwise_eval() {
        let p = params(1.7, &[0.9, 1.4]);
        let pts = vec![vec![0.0, 0.0], vec![1.0, -0.5], vec![-0.3, 2.0]];
        let k = kernel_matrix(&p, &pts, &pts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = kernel_eval(&p, &pts[i], &pts[j]).unwrap();
                assert_relative_eq!(k[(i, j)], v, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn grad_input_matches_finite_differences() {
        let p = params(1.3, &[0.8, 1.9]);
        let a = [0.4, -0.6];
        let b = [1.1, 0.3];
        let g = kernel_grad_input(&p, &a, &b).unwrap();
        let h = 1e-6;
        for m in 0..2 {
            let mut ap = a;
            let mut am = a;
            ap[m] += h;
            am[m] -= h;
            let fd = (kernel_eval(&p, &ap, &b).unwrap() - kernel_eval(&p, &am, &b).unwrap())
                / (2.0 * h);
            assert_relative_eq!(g[m], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn grad_hyper_matches_finite_differences() {
        let base = params(1.6, &[0.7, 1.2]);
        let pts = vec![vec![0.0, 0.5], vec![0.9, -0.2], vec![-0.4, 1.1]];
        let grads = kernel_grad_hyper(&base, &pts).unwrap();
        assert_eq!(grads.len(), 3);
        let h: f64 = 1e-6;

        let eval_at = |log_shift: &dyn Fn(f64, &[f64]) -> (f64, Vec<f64>)| {
            let (sv, ls) = log_shift(base.signal_var(), base.lengthscales());
            let p = KernelHyperparams::new(sv, ls, 0.0, 0.0).unwrap();
            kernel_matrix(&p, &pts, &pts).unwrap()
        };

        // Signal variance in log space.
        let kp = eval_at(&|sv, ls| (sv * h.exp(), ls.to_vec()));
        let km = eval_at(&|sv, ls| (sv * (-h).exp(), ls.to_vec()));
        let fd = (kp - km) / (2.0 * h);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(grads[0][(i, j)], fd[(i, j)], max_relative = 1e-6);
            }
        }

        // Each lengthscale in log space.
        for m in 0..2 {
            let shift = |factor: f64| {
                move |sv: f64, ls: &[f64]| {
                    let mut ls = ls.to_vec();
                    ls[m] *= factor;
                    (sv, ls)
                }
            };
            let kp = eval_at(&shift(h.exp()));
            let km = eval_at(&shift((-h).exp()));
            let fd = (kp - km) / (2.0 * h);
            for i in 0..3 {
                for j in 0..3 {
                    if fd[(i, j)].abs() > 1e-12 {
                        assert_relative_eq!(grads[1 + m][(i, j)], fd[(i, j)], max_relative = 1e-5);
                    } else {
                        assert!(grads[1 + m][(i, j)].abs() < 1e-10);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric_and_bounded(
            sv in 0.05f64..10.0,
            l1 in 0.1f64..5.0,
            l2 in 0.1f64..5.0,
            a in prop::collection::vec(-10.0f64..10.0, 2),
            b in prop::collection::vec(-10.0f64..10.0, 2),
        ) {
            let p = params(sv, &[l1, l2]);
            let kab = kernel_eval(&p, &a, &b).unwrap();
            let kba = kernel_eval(&p, &b, &a).unwrap();
            prop_assert_eq!(kab, kba);
            prop_assert!(kab >= 0.0);
            prop_assert!(kab <= sv * (1.0 + 1e-12));
            // Strict positivity holds unless the exponent underflows f64.
            let quad: f64 = [(a[0] - b[0]) / l1, (a[1] - b[1]) / l2]
                .iter()
                .map(|d| d * d)
                .sum();
            if -0.5 * quad > -700.0 {
                prop_assert!(kab > 0.0);
            }
        }

        #[test]
        fn kernel_matrix_is_psd_up_to_jitter(
            sv in 0.05f64..10.0,
            l in 0.2f64..3.0,
            xs in prop::collection::vec(-5.0f64..5.0, 1..8),
        ) {
            let p = params(sv, &[l]);
            let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
            let mut k = kernel_matrix(&p, &pts, &pts).unwrap();
            let jitter = 1e-10 * sv;
            for i in 0..pts.len() {
                k[(i, i)] += jitter;
            }
            prop_assert!(k.cholesky().is_some());
        }
    }
}
