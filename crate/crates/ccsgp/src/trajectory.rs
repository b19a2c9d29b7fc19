//! Measured-trajectory container and its derived regression views.
//!
//! A trajectory is an ordered list of measured states. Consecutive samples
//! form regression pairs (input x̃(t), target x̃(t+1)); pairs never span two
//! trajectories, and the container records which neighboring targets belong
//! to the same trajectory because the covariance corrections apply only to
//! those.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gp::Dataset;

/// Ordered collection of measured state trajectories with shared dimension.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    trajectories: Vec<Vec<Vec<f64>>>,
    state_dim: usize,
}

impl TrajectorySet {
    /// Build from per-trajectory sample lists. Every trajectory needs at
    /// least two samples (one regression pair), all with equal dimension.
    pub fn new(trajectories: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::invalid("at least one trajectory is required"));
        }
        let state_dim = trajectories[0].first().map_or(0, Vec::len);
        if state_dim == 0 {
            return Err(Error::invalid("states must have at least one dimension"));
        }
        for (k, traj) in trajectories.iter().enumerate() {
            if traj.len() < 2 {
                return Err(Error::invalid(format!(
                    "trajectory {k} has {} samples, need at least 2",
                    traj.len()
                )));
            }
            for (t, x) in traj.iter().enumerate() {
                if x.len() != state_dim {
                    return Err(Error::invalid(format!(
                        "trajectory {k} sample {t} has dimension {}, expected {state_dim}",
                        x.len()
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!(
                        "trajectory {k} sample {t} has non-finite entries"
                    )));
                }
            }
        }
        Ok(Self {
            trajectories,
            state_dim,
        })
    }

    /// Convenience constructor for scalar-state trajectories.
    pub fn from_scalar(trajectories: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            trajectories
                .into_iter()
                .map(|traj| traj.into_iter().map(|x| vec![x]).collect())
                .collect(),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn trajectory_count(&self) -> usize {
        self.trajectories.len()
    }

    pub fn trajectories(&self) -> &[Vec<Vec<f64>>] {
        &self.trajectories
    }

    /// Total number of regression pairs across all trajectories.
    pub fn num_pairs(&self) -> usize {
        self.trajectories.iter().map(|t| t.len() - 1).sum()
    }

    /// Regression inputs in global order: within each trajectory all samples
    /// except the last, trajectories concatenated in order.
    pub fn regression_inputs(&self) -> Vec<Vec<f64>> {
        let mut inputs = Vec::with_capacity(self.num_pairs());
        for traj in &self.trajectories {
            for x in &traj[..traj.len() - 1] {
                inputs.push(x.clone());
            }
        }
        inputs
    }

    /// Targets for one state component, aligned with `regression_inputs`.
    pub fn component_targets(&self, component: usize) -> Result<Vec<f64>> {
        if component >= self.state_dim {
            return Err(Error::invalid(format!(
                "component {component} out of range for state dimension {}",
                self.state_dim
            )));
        }
        let mut targets = Vec::with_capacity(self.num_pairs());
        for traj in &self.trajectories {
            for x in &traj[1..] {
                targets.push(x[component]);
            }
        }
        Ok(targets)
    }

    /// Scalar regression dataset for one state component.
    pub fn component_dataset(&self, component: usize) -> Result<Dataset> {
        Dataset::new(self.regression_inputs(), self.component_targets(component)?)
    }

    /// All targets stacked time-major, component-minor: target t occupies
    /// entries t·n .. t·n+n.
    pub fn stacked_targets(&self) -> DVector<f64> {
        let n = self.state_dim;
        let mut stacked = DVector::zeros(self.num_pairs() * n);
        let mut row = 0;
        for traj in &self.trajectories {
            for x in &traj[1..] {
                for (j, &v) in x.iter().enumerate() {
                    stacked[row * n + j] = v;
                }
                row += 1;
            }
        }
        stacked
    }

    /// Flags for neighboring global target indices: entry t is true when
    /// targets t and t+1 are consecutive samples of one trajectory.
    pub fn consecutive_flags(&self) -> Vec<bool> {
        let total = self.num_pairs();
        if total == 0 {
            return Vec::new();
        }
        let mut flags = vec![false; total - 1];
        let mut offset = 0;
        for traj in &self.trajectories {
            let pairs = traj.len() - 1;
            for i in 0..pairs.saturating_sub(1) {
                flags[offset + i] = true;
            }
            offset += pairs;
        }
        flags
    }

    /// Global index pairs (t, t+1) of targets that are consecutive within
    /// one trajectory; exactly these receive off-diagonal corrections.
    pub fn consecutive_pairs(&self) -> Vec<(usize, usize)> {
        self.consecutive_flags()
            .iter()
            .enumerate()
            .filter(|(_, &within)| within)
            .map(|(t, _)| (t, t + 1))
            .collect()
    }
}
