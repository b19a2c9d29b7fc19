//! Exact GP regression: training covariance factorization, posterior
//! queries, and the log marginal likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelHyperparams};
use crate::linalg::PsdFactor;

/// Regression training set: N input points of dimension d with one scalar
/// target each.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("dataset needs at least one point"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let dim = inputs[0].len();
        if dim == 0 {
            return Err(Error::invalid("inputs must have at least one dimension"));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::invalid(format!(
                    "input {i} has dimension {}, expected {dim}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("input {i} has non-finite entries")));
            }
        }
        if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("target {i} is not finite")));
        }
        Ok(Self { inputs, targets })
    }

    pub(crate) fn empty() -> Self {
        Self {
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn targets_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.targets)
    }
}

/// Which covariance model produced a fitted estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    St,
    Ni,
    Ccs,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::St => "ST",
            MethodTag::Ni => "NI",
            MethodTag::Ccs => "CCS",
        }
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "st" => Ok(MethodTag::St),
            "ni" => Ok(MethodTag::Ni),
            "ccs" => Ok(MethodTag::Ccs),
            other => Err(Error::invalid(format!(
                "unknown method {other:?}, expected one of st, ni, ccs"
            ))),
        }
    }
}

/// Numerical-rescue counters accumulated while fitting a model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitDiagnostics {
    /// Factorizations that needed diagonal jitter to succeed.
    pub jitter_events: u64,
    /// Covariance builds where off-diagonal corrections had to be damped.
    pub beta_events: u64,
}

impl FitDiagnostics {
    pub(crate) fn record_jitter(&mut self, jitter: f64) {
        if jitter > 0.0 {
            self.jitter_events += 1;
        }
    }
}

/// Fitted scalar-output GP: hyperparameters, training data, and the cached
/// covariance factorization behind posterior queries.
pub struct TrainedGP {
    hyperparams: KernelHyperparams,
    dataset: Dataset,
    cov: DMatrix<f64>,
    factor: PsdFactor,
    alpha: DVector<f64>,
    method: MethodTag,
    slopes: Option<DMatrix<f64>>,
    lml: f64,
    diagnostics: FitDiagnostics,
}

impl TrainedGP {
    /// Build a model from an explicit training covariance (noise included).
    pub fn from_covariance(
        hyperparams: KernelHyperparams,
        dataset: Dataset,
        cov: DMatrix<f64>,
        method: MethodTag,
        slopes: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if cov.nrows() != dataset.len() {
            return Err(Error::invalid(format!(
                "covariance is {}x{} but dataset has {} points",
                cov.nrows(),
                cov.ncols(),
                dataset.len()
            )));
        }
        if dataset.input_dim() != hyperparams.input_dim() {
            return Err(Error::invalid(format!(
                "dataset dimension {} does not match kernel dimension {}",
                dataset.input_dim(),
                hyperparams.input_dim()
            )));
        }
        let factor = PsdFactor::new(&cov)?;
        let mut diagnostics = FitDiagnostics::default();
        diagnostics.record_jitter(factor.jitter());
        Ok(Self::from_parts(
            hyperparams,
            dataset,
            cov,
            factor,
            method,
            slopes,
            diagnostics,
        ))
    }

    pub(crate) fn from_parts(
        hyperparams: KernelHyperparams,
        dataset: Dataset,
        cov: DMatrix<f64>,
        factor: PsdFactor,
        method: MethodTag,
        slopes: Option<DMatrix<f64>>,
        diagnostics: FitDiagnostics,
    ) -> Self {
        let targets = dataset.targets_vector();
        let alpha = factor.solve_vec(&targets);
        let lml = lml_from_factor(&factor, &targets, &alpha);
        Self {
            hyperparams,
            dataset,
            cov,
            factor,
            alpha,
            method,
            slopes,
            lml,
            diagnostics,
        }
    }

    /// Model conditioned on no data: posterior equals the prior.
    pub fn prior(hyperparams: KernelHyperparams, method: MethodTag) -> Self {
        Self {
            hyperparams,
            dataset: Dataset::empty(),
            cov: DMatrix::zeros(0, 0),
            factor: PsdFactor::new(&DMatrix::zeros(0, 0)).expect("empty matrix factorizes"),
            alpha: DVector::zeros(0),
            method,
            slopes: None,
            lml: 0.0,
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hyperparams
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn method(&self) -> MethodTag {
        self.method
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn diagnostics(&self) -> FitDiagnostics {
        self.diagnostics
    }

    /// Covariance the model was conditioned on (noise terms included).
    pub fn training_covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Slopes used in the training covariance, one row per training input;
    /// present on NI/CCS models after fitting.
    pub fn slopes(&self) -> Option<&DMatrix<f64>> {
        self.slopes.as_ref()
    }

    pub(crate) fn set_method(&mut self, method: MethodTag) {
        self.method = method;
    }

    pub(crate) fn set_slopes(&mut self, slopes: Option<DMatrix<f64>>) {
        self.slopes = slopes;
    }

    pub(crate) fn set_diagnostics(&mut self, diagnostics: FitDiagnostics) {
        self.diagnostics = diagnostics;
    }

    fn check_query(&self, x_star: &[f64]) -> Result<()> {
        if x_star.len() != self.hyperparams.input_dim() {
            return Err(Error::invalid(format!(
                "query has dimension {}, model expects {}",
                x_star.len(),
                self.hyperparams.input_dim()
            )));
        }
        Ok(())
    }

    fn cross_covariance(&self, x_star: &[f64]) -> Result<DVector<f64>> {
        let mut k = DVector::zeros(self.dataset.len());
        for (i, xi) in self.dataset.inputs().iter().enumerate() {
            k[i] = kernel::kernel_eval(&self.hyperparams, x_star, xi)?;
        }
        Ok(k)
    }

    /// Posterior mean at a query point.
    pub fn posterior_mean(&self, x_star: &[f64]) -> Result<f64> {
        self.check_query(x_star)?;
        if self.dataset.is_empty() {
            return Ok(0.0);
        }
        Ok(self.cross_covariance(x_star)?.dot(&self.alpha))
    }

    /// Posterior variance at a query point; tiny negative values from
    /// round-off are clamped to zero.
    pub fn posterior_var(&self, x_star: &[f64]) -> Result<f64> {
        self.check_query(x_star)?;
        let k_star_star = kernel::kernel_eval(&self.hyperparams, x_star, x_star)?;
        if self.dataset.is_empty() {
            return Ok(k_star_star);
        }
        let k = self.cross_covariance(x_star)?;
        let v = k_star_star - k.dot(&self.factor.solve_vec(&k));
        if v < -1e-10 {
            return Err(Error::Numerical(format!(
                "posterior variance {v:e} below clamp tolerance"
            )));
        }
        Ok(v.max(0.0))
    }

    /// Gradient of the posterior mean with respect to the query point.
    pub fn posterior_mean_grad(&self, x_star: &[f64]) -> Result<DVector<f64>> {
        self.check_query(x_star)?;
        let mut grad = DVector::zeros(x_star.len());
        for (i, xi) in self.dataset.inputs().iter().enumerate() {
            let g = kernel::kernel_grad_input(&self.hyperparams, x_star, xi)?;
            grad += g * self.alpha[i];
        }
        Ok(grad)
    }
}

pub(crate) fn lml_from_factor(
    factor: &PsdFactor,
    targets: &DVector<f64>,
    alpha: &DVector<f64>,
) -> f64 {
    let n = targets.len() as f64;
    -0.5 * targets.dot(alpha)
        - 0.5 * factor.log_det()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Log-probability of `targets` under a zero-mean Gaussian with the given
/// covariance (noise included).
pub fn log_marginal_likelihood(cov: &DMatrix<f64>, targets: &DVector<f64>) -> Result<f64> {
    if cov.nrows() != targets.len() {
        return Err(Error::invalid(format!(
            "covariance is {}x{} but there are {} targets",
            cov.nrows(),
            cov.ncols(),
            targets.len()
        )));
    }
    let factor = PsdFactor::new(cov)?;
    let alpha = factor.solve_vec(targets);
    Ok(lml_from_factor(&factor, targets, &alpha))
}

/// Training covariance of the standard GP: kernel matrix plus lumped noise
/// variance on the diagonal.
pub fn st_covariance(hp: &KernelHyperparams, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let mut k = kernel::kernel_matrix(hp, inputs, inputs)?;
    let noise = hp.lumped_noise_var();
    for i in 0..inputs.len() {
        k[(i, i)] += noise;
    }
    Ok(k)
}

/// Build a standard-GP model at fixed hyperparameters.
pub fn st_model(dataset: Dataset, hp: KernelHyperparams) -> Result<TrainedGP> {
    let cov = st_covariance(&hp, dataset.inputs())?;
    TrainedGP::from_covariance(hp, dataset, cov, MethodTag::St, None)
}

struct StCovModel<'a> {
    inputs: &'a [Vec<f64>],
}

impl crate::optimizer::CovarianceModel for StCovModel<'_> {
    fn build(&self, hp: &KernelHyperparams, _beta: f64) -> Result<DMatrix<f64>> {
        st_covariance(hp, self.inputs)
    }
}

/// Fit a standard GP by maximizing the log marginal likelihood. The learned
/// noise is the lumped total, reported in the process-noise slot.
pub fn st_fit(dataset: &Dataset, opts: &crate::optimizer::FitOptions) -> Result<TrainedGP> {
    opts.validate()?;
    let layout = crate::optimizer::ParamLayout::standard(dataset.input_dim(), opts);
    let targets = dataset.targets_vector();
    let center = crate::optimizer::init_center(dataset.inputs(), &targets, &layout)?;
    let model = StCovModel {
        inputs: dataset.inputs(),
    };
    let mut diag = FitDiagnostics::default();
    let (hp, _) = crate::optimizer::optimize_hyperparams(
        &model, &targets, &layout, &center, None, opts, 0, &mut diag,
    )?;
    let fc = crate::optimizer::factorize_covariance(&model, &hp, &mut diag)?;
    Ok(TrainedGP::from_parts(
        hp,
        dataset.clone(),
        fc.cov,
        fc.factor,
        MethodTag::St,
        None,
        diag,
    ))
}
