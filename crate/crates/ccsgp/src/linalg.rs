//! Positive-definite factorization with escalating jitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter ladder applied to the mean diagonal when a plain Cholesky
/// factorization fails.
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorization of a symmetric positive-definite matrix, together
/// with the jitter that had to be added to obtain it.
pub struct PsdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    dim: usize,
}

impl PsdFactor {
    /// Factorize `cov`, escalating jitter through the ladder if the plain
    /// factorization fails. Jitter is scaled by the mean diagonal of `cov`.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::invalid(format!(
                "covariance must be square, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let n = cov.nrows();
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "covariance contains non-finite entries".into(),
            ));
        }
        if let Some(chol) = cov.clone().cholesky() {
            return Ok(Self {
                chol,
                jitter: 0.0,
                dim: n,
            });
        }
        let mean_diag = cov.diagonal().sum() / n.max(1) as f64;
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        for rel in JITTER_LADDER {
            let jitter = rel * scale;
            let mut jittered = cov.clone();
            for i in 0..n {
                jittered[(i, i)] += jitter;
            }
            if let Some(chol) = jittered.cholesky() {
                return Ok(Self {
                    chol,
                    jitter,
                    dim: n,
                });
            }
        }
        Err(Error::NotPositiveDefinite {
            minor: failing_minor(cov),
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Jitter added to the diagonal; zero when the plain factorization held.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// Log-determinant of the (jittered) matrix.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Lower-triangular factor L with L·Lᵀ equal to the (jittered) matrix.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// 1-based order of the first leading principal minor that is not positive
/// definite, found by running an unpivoted Cholesky until a pivot fails.
fn failing_minor(cov: &DMatrix<f64>) -> usize {
    let n = cov.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d.is_finite() && d > 0.0) {
            return j + 1;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    // The full matrix factorized; report the final order as the failure site
    // of whatever numerical issue stopped the library factorization.
    n
}

/// Solve cov · x = rhs and report the log-determinant and jitter used.
pub fn psd_solve(cov: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64, f64)> {
    if rhs.len() != cov.nrows() {
        return Err(Error::invalid(format!(
            "rhs length {} does not match covariance dimension {}",
            rhs.len(),
            cov.nrows()
        )));
    }
    let factor = PsdFactor::new(cov)?;
    Ok((factor.solve_vec(rhs), factor.log_det(), factor.jitter()))
}
