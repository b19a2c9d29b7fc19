//! Experiment configuration: a versioned JSON document describing the
//! system, data generation protocol, noise grid, methods, and optimizer
//! budget of one sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::MethodTag;
use crate::systems::{NoiseSpec, SystemSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Hyperparameter-search budget shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Random restarts per optimization round.
    pub n_starts: usize,
    /// Simplex iteration cap per start.
    pub max_iters: usize,
    /// Convergence tolerance on the objective spread.
    pub tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let opts = crate::optimizer::FitOptions::default();
        Self {
            n_starts: opts.n_starts,
            max_iters: opts.max_opt_iters,
            tol: opts.tol,
        }
    }
}

fn default_iterations() -> usize {
    crate::optimizer::FitOptions::default().iterations
}

/// Full description of one experiment sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub system: SystemSpec,
    /// Number of training trajectories per cell.
    pub trajectory_count: usize,
    /// Measured samples per trajectory (a trajectory of length L yields
    /// L - 1 regression pairs).
    pub trajectory_length: usize,
    /// Process/measurement variance pairs to sweep.
    pub noise_grid: Vec<NoiseSpec>,
    /// Data seeds; every method sees identical data for a given seed.
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodTag>,
    /// Slope/hyperparameter alternation rounds for NI and CCS fits.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Query points for MSE evaluation.
    pub test_count: usize,
    /// Root of all derived random streams.
    #[serde(default)]
    pub master_seed: u64,
    /// Optional region override used for initial conditions and test
    /// sampling; when absent, each system's built-in regions apply.
    #[serde(default)]
    pub operating_region: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Default output directory; the CLI may override it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.system.validate()?;
        if self.trajectory_count == 0 {
            return Err(Error::Config("trajectory_count must be at least 1".into()));
        }
        if self.trajectory_length < 2 {
            return Err(Error::Config(
                "trajectory_length must be at least 2 to form a regression pair".into(),
            ));
        }
        if self.noise_grid.is_empty() {
            return Err(Error::Config("noise_grid must be nonempty".into()));
        }
        for noise in &self.noise_grid {
            noise.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be nonempty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return Err(Error::Config(format!("method {m} listed twice")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.test_count == 0 {
            return Err(Error::Config("test_count must be at least 1".into()));
        }
        if let Some(region) = &self.operating_region {
            if region.len() != self.system.state_dim() {
                return Err(Error::Config(format!(
                    "operating_region has {} dimensions, system {} has {}",
                    region.len(),
                    self.system.name(),
                    self.system.state_dim()
                )));
            }
            for &(lo, hi) in region {
                if !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return Err(Error::Config(format!(
                        "operating_region interval [{lo}, {hi}] is not a finite ordered pair"
                    )));
                }
            }
        }
        if self.optimizer.n_starts == 0 || self.optimizer.max_iters == 0 {
            return Err(Error::Config(
                "optimizer.n_starts and optimizer.max_iters must be at least 1".into(),
            ));
        }
        if !self.optimizer.tol.is_finite() || self.optimizer.tol <= 0.0 {
            return Err(Error::Config("optimizer.tol must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    /// Total number of cells the sweep will run.
    pub fn cell_count(&self) -> usize {
        self.methods.len() * self.noise_grid.len() * self.seeds.len()
    }

    pub(crate) fn fit_options(&self, fit_seed: u64) -> crate::optimizer::FitOptions {
        crate::optimizer::FitOptions {
            iterations: self.iterations,
            n_starts: self.optimizer.n_starts,
            max_opt_iters: self.optimizer.max_iters,
            tol: self.optimizer.tol,
            seed: fit_seed,
            fix_process_var: None,
            fix_measurement_var: None,
        }
    }
}

#[cfg(test)]
pub(crate) fn minimal_config() -> ExperimentConfig {
    use crate::systems::LogisticGrowthParams;
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        system: SystemSpec::LogisticGrowth(LogisticGrowthParams::default()),
        trajectory_count: 2,
        trajectory_length: 8,
        noise_grid: vec![NoiseSpec {
            process_var: 1e-3,
            measurement_var: 1e-2,
        }],
        seeds: vec![1, 2],
        methods: vec![MethodTag::St, MethodTag::Ccs],
        iterations: 2,
        test_count: 20,
        master_seed: 7,
        operating_region: None,
        optimizer: OptimizerConfig {
            n_starts: 1,
            max_iters: 30,
            tol: 1e-5,
        },
        output_dir: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_validates_and_counts_cells() {
        let cfg = minimal_config();
        cfg.validate().unwrap();
        assert_eq!(cfg.cell_count(), 2 * 1 * 2);
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let text = r#"{
            "schema_version": 1,
            "system": {"type": "logistic_growth"},
            "trajectory_count": 3,
            "trajectory_length": 100,
            "noise_grid": [{"process_var": 0.001, "measurement_var": 0.25}],
            "seeds": [0],
            "methods": ["st", "ni", "ccs"],
            "test_count": 500
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.iterations, 5);
        assert_eq!(cfg.master_seed, 0);
        assert_eq!(cfg.optimizer, OptimizerConfig::default());
        assert!(cfg.operating_region.is_none());
        assert_eq!(
            cfg.methods,
            vec![MethodTag::St, MethodTag::Ni, MethodTag::Ccs]
        );
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = minimal_config();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = minimal_config();
        cfg.schema_version = 99;
        assert!(cfg.validate().is_err());

        let mut cfg = minimal_config();
        cfg.trajectory_length = 1;
        assert!(cfg.validate().is_err());

        let mut cfg = minimal_config();
        cfg.noise_grid.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = minimal_config();
        cfg.methods = vec![MethodTag::St, MethodTag::St];
        assert!(cfg.validate().is_err());

        let mut cfg = minimal_config();
        cfg.operating_region = Some(vec![(0.0, 1.0), (0.0, 1.0)]);
        assert!(cfg.validate().is_err());

        let mut cfg = minimal_config();
        cfg.optimizer.tol = 0.0;
        assert!(cfg.validate().is_err());
    }
}
