//! Experiment execution: one cell = (method, noise point, seed).
//!
//! Every random stream a cell consumes is derived from the master seed plus
//! cell labels, so cells can run in any order, in parallel, and still
//! reproduce bit-identically. The method name is deliberately absent from
//! the data and fit stream labels: all methods within a cell see the same
//! trajectories, test points, and optimizer restarts, so method comparisons
//! are paired.

use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rayon::prelude::*;

use crate::ccs::ccs_fit_scalar;
use crate::ccs_md::{ccs_fit_md, JointModel};
use crate::error::{Error, Result};
use crate::gp::{st_fit, FitDiagnostics, MethodTag, TrainedGP};
use crate::harness::config::ExperimentConfig;
use crate::harness::results::{
    mse, summarize, CellFailure, CsvAppender, ExperimentResult, SweepReport,
};
use crate::nigp::ni_fit;
use crate::rng::{derive_rng_seeded, derive_u64};
use crate::systems::{envelope_region, sample_test_points, simulate_trajectory};
use crate::trajectory::TrajectorySet;

/// A fitted one-step predictor, shaped by the method and state dimension:
/// ST and NI fit each state component independently; CCS fits scalar states
/// with the consecutive-pair covariance and vector states jointly.
enum FittedModel {
    PerComponent(Vec<TrainedGP>),
    Scalar(TrainedGP),
    Joint(JointModel),
}

impl FittedModel {
    fn predict_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FittedModel::PerComponent(models) => models
                .iter()
                .map(|m| m.posterior_mean(x))
                .collect::<Result<Vec<f64>>>(),
            FittedModel::Scalar(m) => Ok(vec![m.posterior_mean(x)?]),
            FittedModel::Joint(j) => Ok(j.posterior_mean(x)?.iter().copied().collect()),
        }
    }

    fn diagnostics(&self) -> FitDiagnostics {
        match self {
            FittedModel::PerComponent(models) => {
                let mut total = FitDiagnostics::default();
                for m in models {
                    total.jitter_events += m.diagnostics().jitter_events;
                    total.beta_events += m.diagnostics().beta_events;
                }
                total
            }
            FittedModel::Scalar(m) => m.diagnostics(),
            FittedModel::Joint(j) => j.diagnostics(),
        }
    }
}

fn fit_model(
    method: MethodTag,
    traj: &TrajectorySet,
    opts: &crate::optimizer::FitOptions,
) -> Result<FittedModel> {
    match method {
        MethodTag::St => Ok(FittedModel::PerComponent(
            (0..traj.state_dim())
                .map(|j| st_fit(&traj.component_dataset(j)?, opts))
                .collect::<Result<Vec<_>>>()?,
        )),
        MethodTag::Ni => Ok(FittedModel::PerComponent(
            (0..traj.state_dim())
                .map(|j| ni_fit(&traj.component_dataset(j)?, opts))
                .collect::<Result<Vec<_>>>()?,
        )),
        MethodTag::Ccs => {
            if traj.state_dim() == 1 {
                Ok(FittedModel::Scalar(ccs_fit_scalar(traj, opts)?))
            } else {
                Ok(FittedModel::Joint(ccs_fit_md(traj, opts)?))
            }
        }
    }
}

fn sample_point(region: &[(f64, f64)], rng: &mut impl Rng) -> Result<Vec<f64>> {
    region
        .iter()
        .map(|&(lo, hi)| {
            Uniform::new_inclusive(lo, hi)
                .map(|d| d.sample(rng))
                .map_err(|e| Error::invalid(format!("bad sampling interval: {e}")))
        })
        .collect()
}

/// Run one experiment cell: generate data, fit, evaluate MSE over freshly
/// sampled test points against the noise-free map.
pub fn run_cell(
    config: &ExperimentConfig,
    method: MethodTag,
    noise_idx: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    config.validate()?;
    let noise = *config.noise_grid.get(noise_idx).ok_or_else(|| {
        Error::invalid(format!(
            "noise index {noise_idx} out of range for grid of {}",
            config.noise_grid.len()
        ))
    })?;
    let spec = &config.system;
    let master = config.master_seed;
    let noise_label = format!("noise-{noise_idx}");
    let seed_label = format!("seed-{seed}");
    let base = [spec.name(), noise_label.as_str(), seed_label.as_str()];

    let init_region = config
        .operating_region
        .clone()
        .unwrap_or_else(|| spec.init_region());
    let mut clean_trajs = Vec::with_capacity(config.trajectory_count);
    let mut measured_trajs = Vec::with_capacity(config.trajectory_count);
    for k in 0..config.trajectory_count {
        let traj_label = format!("traj-{k}");
        let label = |role: &'static str| -> Vec<&str> {
            let mut parts = base.to_vec();
            parts.push(&traj_label);
            parts.push(role);
            parts
        };
        let x0 = sample_point(&init_region, &mut derive_rng_seeded(master, &label("init")))?;
        let (clean, measured) = simulate_trajectory(
            spec,
            &noise,
            &x0,
            config.trajectory_length,
            &mut derive_rng_seeded(master, &label("w")),
            &mut derive_rng_seeded(master, &label("r")),
        )?;
        clean_trajs.push(clean);
        measured_trajs.push(measured);
    }
    let traj = TrajectorySet::new(measured_trajs)?;

    let test_region = match &config.operating_region {
        Some(region) => region.clone(),
        None => match spec.default_test_region() {
            Some(region) => region,
            None => envelope_region(&clean_trajs, 0.1)?,
        },
    };
    let mut test_parts = base.to_vec();
    test_parts.push("test");
    let (points, truths) = sample_test_points(
        spec,
        &test_region,
        config.test_count,
        &mut derive_rng_seeded(master, &test_parts),
    )?;

    let mut fit_parts = base.to_vec();
    fit_parts.push("fit");
    let opts = config.fit_options(derive_u64(master, &fit_parts));

    let fit_start = Instant::now();
    let model = fit_model(method, &traj, &opts)?;
    let fit_ms = fit_start.elapsed().as_secs_f64() * 1e3;

    let predict_start = Instant::now();
    let predictions = points
        .iter()
        .map(|x| model.predict_mean(x))
        .collect::<Result<Vec<_>>>()?;
    let predict_ms = predict_start.elapsed().as_secs_f64() * 1e3;

    let diag = model.diagnostics();
    Ok(ExperimentResult {
        system: spec.name().to_string(),
        method,
        sigma_w2: noise.process_var,
        sigma_r2: noise.measurement_var,
        seed,
        mse: mse(&predictions, &truths)?,
        fit_ms,
        predict_ms,
        jitter_events: diag.jitter_events,
        beta_events: diag.beta_events,
    })
}

struct SweepProgress {
    appender: CsvAppender,
    rows: Vec<ExperimentResult>,
    failures: Vec<CellFailure>,
    io_error: Option<Error>,
}

/// Run the full methods × noise grid × seeds sweep, appending completed
/// rows to `results.csv` as they arrive and mirroring everything, config
/// included, into `results.json`. Cell failures are recorded and skipped,
/// never fatal; I/O failures are.
pub fn run_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<SweepReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("results.csv");
    let json_path = out_dir.join("results.json");

    let mut cells = Vec::with_capacity(config.cell_count());
    for &method in &config.methods {
        for noise_idx in 0..config.noise_grid.len() {
            for &seed in &config.seeds {
                cells.push((method, noise_idx, seed));
            }
        }
    }
    log::info!(
        "sweeping {} cells ({} methods x {} noise points x {} seeds) on {}",
        cells.len(),
        config.methods.len(),
        config.noise_grid.len(),
        config.seeds.len(),
        config.system.name()
    );

    let progress = Mutex::new(SweepProgress {
        appender: CsvAppender::create(&csv_path)?,
        rows: Vec::with_capacity(cells.len()),
        failures: Vec::new(),
        io_error: None,
    });

    let work = |&(method, noise_idx, seed): &(MethodTag, usize, u64)| {
        match run_cell(config, method, noise_idx, seed) {
            Ok(row) => {
                log::info!(
                    "cell done: {} noise {} seed {} mse {:.6e}",
                    method,
                    noise_idx,
                    seed,
                    row.mse
                );
                let mut p = progress.lock().expect("sweep lock");
                match p.appender.append(&row) {
                    Ok(()) => p.rows.push(row),
                    Err(err) => {
                        if p.io_error.is_none() {
                            p.io_error = Some(err);
                        }
                    }
                }
            }
            Err(err) => {
                log::warn!(
                    "cell failed: {} noise {} seed {}: {err}",
                    method,
                    noise_idx,
                    seed
                );
                let noise = config.noise_grid[noise_idx];
                progress.lock().expect("sweep lock").failures.push(CellFailure {
                    system: config.system.name().to_string(),
                    method,
                    sigma_w2: noise.process_var,
                    sigma_r2: noise.measurement_var,
                    seed,
                    error: err.to_string(),
                });
            }
        }
    };

    match workers {
        Some(count) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(count)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| cells.par_iter().for_each(work));
        }
        None => cells.par_iter().for_each(work),
    }

    let progress = progress.into_inner().expect("sweep lock");
    if let Some(err) = progress.io_error {
        return Err(err);
    }
    let summary = summarize(&progress.rows);
    let report = SweepReport {
        config: config.clone(),
        results: progress.rows,
        failures: progress.failures,
        summary,
    };
    crate::harness::results::write_json(&json_path, &report)?;
    Ok(report)
}
