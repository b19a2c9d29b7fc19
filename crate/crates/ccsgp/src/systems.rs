//! Benchmark dynamical systems and the noisy-trajectory generator.
//!
//! Each system is a deterministic discrete-time map x(t+1) = f(x(t)),
//! obtained from a continuous-time model by explicit Euler discretization
//! where needed. The generator rolls out clean states with additive process
//! noise and overlays measurement noise on every sample, including the
//! initial one, drawing the two noise kinds from separate streams so they
//! stay independent.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic growth map parameters: x' = x + dt·rate·x·(1 − x/capacity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticGrowthParams {
    pub dt: f64,
    pub rate: f64,
    pub capacity: f64,
}

impl Default for LogisticGrowthParams {
    fn default() -> Self {
        Self {
            dt: 1.0,
            rate: 0.1,
            capacity: 100.0,
        }
    }
}

/// Batch reactor with a second-order forward and first-order reverse
/// reaction 2A ⇌ B, Euler-discretized:
/// x1' = x1 + dt·(−2 c1 x1² + 2 c2 x2), x2' = x2 + dt·(c1 x1² − c2 x2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchReactorParams {
    pub dt: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for BatchReactorParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            c1: 0.16,
            c2: 0.0064,
        }
    }
}

/// Planar two-link arm with point masses at the link ends, viscous joint
/// damping, no actuation. State is (q1, q2, q̇1, q̇2) with angles measured
/// from the horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoLinkRobotParams {
    pub dt: f64,
    pub link1_mass: f64,
    pub link2_mass: f64,
    pub link1_length: f64,
    pub link2_length: f64,
    pub damping: f64,
    pub gravity: f64,
}

impl Default for TwoLinkRobotParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            link1_mass: 1.0,
            link2_mass: 1.0,
            link1_length: 1.0,
            link2_length: 1.0,
            damping: 0.5,
            gravity: 9.8,
        }
    }
}

/// Classic cart-pole with an unactuated cart. State is (x, ẋ, θ, θ̇) with
/// θ measured from the upright position; `pole_length` is the distance from
/// the pivot to the pole's center of mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPoleParams {
    pub dt: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub force: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            dt: 0.02,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            gravity: 9.8,
            force: 0.0,
        }
    }
}

/// A benchmark system together with its numerical parameters.
///
/// Serialized form carries a `type` tag plus the parameter fields, all of
/// which default to the standard benchmark values when omitted, so
/// experiment configs can override any constant without a rebuild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemSpec {
    LogisticGrowth(LogisticGrowthParams),
    BatchReactor(BatchReactorParams),
    TwoLinkRobot(TwoLinkRobotParams),
    CartPole(CartPoleParams),
}

impl SystemSpec {
    /// Stable lowercase identifier, used in result rows.
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::LogisticGrowth(_) => "logistic_growth",
            SystemSpec::BatchReactor(_) => "batch_reactor",
            SystemSpec::TwoLinkRobot(_) => "two_link_robot",
            SystemSpec::CartPole(_) => "cart_pole",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            SystemSpec::LogisticGrowth(_) => 1,
            SystemSpec::BatchReactor(_) => 2,
            SystemSpec::TwoLinkRobot(_) | SystemSpec::CartPole(_) => 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite, got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            finite(name, v)?;
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let nonnegative = |name: &str, v: f64| {
            finite(name, v)?;
            if v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be nonnegative, got {v}")))
            }
        };
        match self {
            SystemSpec::LogisticGrowth(p) => {
                positive("dt", p.dt)?;
                finite("rate", p.rate)?;
                positive("capacity", p.capacity)
            }
            SystemSpec::BatchReactor(p) => {
                positive("dt", p.dt)?;
                nonnegative("c1", p.c1)?;
                nonnegative("c2", p.c2)
            }
            SystemSpec::TwoLinkRobot(p) => {
                positive("dt", p.dt)?;
                positive("link1_mass", p.link1_mass)?;
                positive("link2_mass", p.link2_mass)?;
                positive("link1_length", p.link1_length)?;
                positive("link2_length", p.link2_length)?;
                nonnegative("damping", p.damping)?;
                finite("gravity", p.gravity)
            }
            SystemSpec::CartPole(p) => {
                positive("dt", p.dt)?;
                positive("cart_mass", p.cart_mass)?;
                positive("pole_mass", p.pole_mass)?;
                positive("pole_length", p.pole_length)?;
                finite("gravity", p.gravity)?;
                finite("force", p.force)
            }
        }
    }

    fn raw_step(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SystemSpec::LogisticGrowth(p) => {
                let v = x[0];
                vec![v + p.dt * p.rate * v * (1.0 - v / p.capacity)]
            }
            SystemSpec::BatchReactor(p) => {
                let (a, b) = (x[0], x[1]);
                vec![
                    a + p.dt * (-2.0 * p.c1 * a * a + 2.0 * p.c2 * b),
                    b + p.dt * (p.c1 * a * a - p.c2 * b),
                ]
            }
            SystemSpec::TwoLinkRobot(p) => {
                let (q1, q2, dq1, dq2) = (x[0], x[1], x[2], x[3]);
                let (m1, m2) = (p.link1_mass, p.link2_mass);
                let (l1, l2) = (p.link1_length, p.link2_length);
                let (c2, s2) = (q2.cos(), q2.sin());
                let m11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2);
                let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
                let m22 = m2 * l2 * l2;
                let cor1 = -m2 * l1 * l2 * s2 * (2.0 * dq1 * dq2 + dq2 * dq2);
                let cor2 = m2 * l1 * l2 * s2 * dq1 * dq1;
                let grav1 = (m1 + m2) * p.gravity * l1 * q1.cos()
                    + m2 * p.gravity * l2 * (q1 + q2).cos();
                let grav2 = m2 * p.gravity * l2 * (q1 + q2).cos();
                let rhs1 = -cor1 - grav1 - p.damping * dq1;
                let rhs2 = -cor2 - grav2 - p.damping * dq2;
                let det = m11 * m22 - m12 * m12;
                let ddq1 = (m22 * rhs1 - m12 * rhs2) / det;
                let ddq2 = (-m12 * rhs1 + m11 * rhs2) / det;
                vec![
                    q1 + p.dt * dq1,
                    q2 + p.dt * dq2,
                    dq1 + p.dt * ddq1,
                    dq2 + p.dt * ddq2,
                ]
            }
            SystemSpec::CartPole(p) => {
                let (pos, vel, theta, omega) = (x[0], x[1], x[2], x[3]);
                let total = p.cart_mass + p.pole_mass;
                let (s, c) = (theta.sin(), theta.cos());
                let temp =
                    (p.force + p.pole_mass * p.pole_length * omega * omega * s) / total;
                let dd_theta = (p.gravity * s - c * temp)
                    / (p.pole_length * (4.0 / 3.0 - p.pole_mass * c * c / total));
                let dd_pos = temp - p.pole_mass * p.pole_length * dd_theta * c / total;
                vec![
                    pos + p.dt * vel,
                    vel + p.dt * dd_pos,
                    theta + p.dt * omega,
                    omega + p.dt * dd_theta,
                ]
            }
        }
    }

    /// One noise-free step of the deterministic map.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim() {
            return Err(Error::invalid(format!(
                "state has dimension {}, system {} expects {}",
                x.len(),
                self.name(),
                self.state_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state has non-finite entries"));
        }
        let next = self.raw_step(x);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: 0 });
        }
        Ok(next)
    }

    /// Sampling region for training initial conditions when the experiment
    /// config does not pin an operating region.
    pub fn init_region(&self) -> Vec<(f64, f64)> {
        match self {
            SystemSpec::LogisticGrowth(p) => vec![(0.0, p.capacity)],
            SystemSpec::BatchReactor(_) => vec![(0.5, 2.0); 2],
            SystemSpec::TwoLinkRobot(_) => {
                let q = std::f64::consts::FRAC_PI_2;
                vec![(-q, q), (-q, q), (-1.0, 1.0), (-1.0, 1.0)]
            }
            SystemSpec::CartPole(_) => {
                vec![(-0.5, 0.5), (-0.5, 0.5), (-0.2, 0.2), (-0.2, 0.2)]
            }
        }
    }

    /// Test region fixed by the benchmark definition, if any. Systems
    /// without one fall back to the envelope of the training trajectories.
    pub fn default_test_region(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            SystemSpec::LogisticGrowth(p) => Some(vec![(0.0, p.capacity)]),
            _ => None,
        }
    }
}

/// Variances of the two additive Gaussian noise sources: process noise
/// enters the state recursion, measurement noise the observations only.
/// Both are zero-mean, iid over time, and equal across state components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub process_var: f64,
    pub measurement_var: f64,
}

impl NoiseSpec {
    pub fn new(process_var: f64, measurement_var: f64) -> Result<Self> {
        let spec = Self {
            process_var,
            measurement_var,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("process_var", self.process_var),
            ("measurement_var", self.measurement_var),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn validate_region(region: &[(f64, f64)], state_dim: usize) -> Result<()> {
    if region.len() != state_dim {
        return Err(Error::invalid(format!(
            "region has {} dimensions, state has {state_dim}",
            region.len()
        )));
    }
    for &(lo, hi) in region {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::invalid(format!(
                "region interval [{lo}, {hi}] is not a finite ordered pair"
            )));
        }
    }
    Ok(())
}

/// Per-dimension envelope of a set of trajectories, with each interval's
/// half-width inflated by the given fraction around its midpoint.
pub fn envelope_region(
    trajectories: &[Vec<Vec<f64>>],
    inflation: f64,
) -> Result<Vec<(f64, f64)>> {
    let dim = trajectories
        .first()
        .and_then(|t| t.first())
        .map(|x| x.len())
        .ok_or_else(|| Error::invalid("cannot build an envelope from empty trajectories"))?;
    if !inflation.is_finite() || inflation < 0.0 {
        return Err(Error::invalid(format!(
            "inflation must be finite and nonnegative, got {inflation}"
        )));
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for traj in trajectories {
        for state in traj {
            if state.len() != dim {
                return Err(Error::invalid("trajectories have inconsistent dimensions"));
            }
            for (m, &v) in state.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid("trajectory state has non-finite entries"));
                }
                lo[m] = lo[m].min(v);
                hi[m] = hi[m].max(v);
            }
        }
    }
    Ok(lo
        .iter()
        .zip(&hi)
        .map(|(&a, &b)| {
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a) * (1.0 + inflation);
            (mid - half, mid + half)
        })
        .collect())
}

/// Roll out one trajectory of `samples` states.
///
/// The clean sequence follows x(t+1) = f(x(t)) + w(t); the measured sequence
/// is x̃(t) = x(t) + r(t) for every t, the initial sample included. Process
/// and measurement noise come from the two separate generators, so the clean
/// states never depend on the measurement stream.
pub fn simulate_trajectory(
    spec: &SystemSpec,
    noise: &NoiseSpec,
    x0: &[f64],
    samples: usize,
    w_rng: &mut impl Rng,
    r_rng: &mut impl Rng,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    spec.validate()?;
    noise.validate()?;
    if samples == 0 {
        return Err(Error::invalid("a trajectory needs at least one sample"));
    }
    let n = spec.state_dim();
    if x0.len() != n {
        return Err(Error::invalid(format!(
            "initial state has dimension {}, system {} expects {n}",
            x0.len(),
            spec.name()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state has non-finite entries"));
    }

    let w_dist = Normal::new(0.0, noise.process_var.sqrt()).expect("validated variance");
    let r_dist = Normal::new(0.0, noise.measurement_var.sqrt()).expect("validated variance");

    let mut clean = Vec::with_capacity(samples);
    clean.push(x0.to_vec());
    for t in 1..samples {
        let mut next = spec.raw_step(&clean[t - 1]);
        for v in next.iter_mut() {
            *v += w_dist.sample(w_rng);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: t });
        }
        clean.push(next);
    }

    let measured = clean
        .iter()
        .map(|state| state.iter().map(|&v| v + r_dist.sample(r_rng)).collect())
        .collect();
    Ok((clean, measured))
}

/// Draw query points uniformly over a region, paired with their noise-free
/// next states for error evaluation.
pub fn sample_test_points(
    spec: &SystemSpec,
    region: &[(f64, f64)],
    count: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    spec.validate()?;
    validate_region(region, spec.state_dim())?;
    if count == 0 {
        return Err(Error::invalid("test point count must be at least one"));
    }
    let dists: Vec<Uniform<f64>> = region
        .iter()
        .map(|&(lo, hi)| {
            Uniform::new_inclusive(lo, hi)
                .map_err(|e| Error::invalid(format!("bad sampling interval: {e}")))
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(count);
    let mut truths = Vec::with_capacity(count);
    for _ in 0..count {
        let x: Vec<f64> = dists.iter().map(|d| d.sample(rng)).collect();
        truths.push(spec.step(&x)?);
        points.push(x);
    }
    Ok((points, truths))
}
