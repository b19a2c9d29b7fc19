//! Result rows, aggregate summaries, and the CSV/JSON persistence layer.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::MethodTag;
use crate::harness::config::ExperimentConfig;

pub const CSV_HEADER: &str =
    "system,method,sigma_w2,sigma_r2,seed,mse,fit_ms,predict_ms,jitter_events,beta_events";

/// Outcome of one successfully evaluated experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub system: String,
    pub method: MethodTag,
    pub sigma_w2: f64,
    pub sigma_r2: f64,
    pub seed: u64,
    pub mse: f64,
    pub fit_ms: f64,
    pub predict_ms: f64,
    pub jitter_events: u64,
    pub beta_events: u64,
}

/// A cell whose simulation or fit failed; kept out of the CSV, recorded in
/// the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub system: String,
    pub method: MethodTag,
    pub sigma_w2: f64,
    pub sigma_r2: f64,
    pub seed: u64,
    pub error: String,
}

/// Median and interquartile range of MSE for one (method, noise) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: MethodTag,
    pub sigma_w2: f64,
    pub sigma_r2: f64,
    pub cells: usize,
    pub median_mse: f64,
    pub iqr_mse: f64,
}

/// Everything a sweep produced, with the config embedded for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<CellFailure>,
    pub summary: Vec<SummaryRow>,
}

/// Linearly interpolated quantile of a sorted sample.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let idx = p * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Aggregate rows into per-(method, noise) medians and interquartile
/// ranges. A pure function of the row set: row order never matters.
pub fn summarize(results: &[ExperimentResult]) -> Vec<SummaryRow> {
    let mut groups: Vec<(MethodTag, f64, f64, Vec<f64>)> = Vec::new();
    for row in results {
        match groups.iter_mut().find(|(m, w, r, _)| {
            *m == row.method && *w == row.sigma_w2 && *r == row.sigma_r2
        }) {
            Some((_, _, _, mses)) => mses.push(row.mse),
            None => groups.push((row.method, row.sigma_w2, row.sigma_r2, vec![row.mse])),
        }
    }
    groups.sort_by(|a, b| {
        (a.0.as_str(), a.1, a.2)
            .partial_cmp(&(b.0.as_str(), b.1, b.2))
            .expect("finite noise variances")
    });
    groups
        .into_iter()
        .map(|(method, sigma_w2, sigma_r2, mut mses)| {
            mses.sort_by(f64::total_cmp);
            SummaryRow {
                method,
                sigma_w2,
                sigma_r2,
                cells: mses.len(),
                median_mse: quantile_sorted(&mses, 0.5),
                iqr_mse: quantile_sorted(&mses, 0.75) - quantile_sorted(&mses, 0.25),
            }
        })
        .collect()
}

/// CSV writer that appends one row at a time and flushes after each, so a
/// partially completed sweep still leaves usable output behind.
pub struct CsvAppender {
    writer: csv::Writer<std::fs::File>,
}

impl CsvAppender {
    pub fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path)?;
        // Write the header eagerly so an all-failures sweep still leaves a
        // well-formed file; rows then serialize without the automatic one.
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        writer.write_record(CSV_HEADER.split(','))?;
        writer.flush()?;
        Ok(Self { writer })
    }

    pub fn append(&mut self, row: &ExperimentResult) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<ExperimentResult>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

pub fn write_json(path: &Path, report: &SweepReport) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, report)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<SweepReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Render summary rows as an aligned text table.
pub fn format_summary(summary: &[SummaryRow]) -> String {
    let mut out = String::from(
        "method  sigma_w2      sigma_r2      cells  median_mse       iqr_mse\n",
    );
    for row in summary {
        out.push_str(&format!(
            "{:<7} {:<13.6e} {:<13.6e} {:<6} {:<16.9e} {:<16.9e}\n",
            row.method.as_str(),
            row.sigma_w2,
            row.sigma_r2,
            row.cells,
            row.median_mse,
            row.iqr_mse
        ));
    }
    out
}

/// Mean squared Euclidean distance between predictions and truths.
pub fn mse(predictions: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(Error::invalid(format!(
            "mse needs equally many predictions and truths, got {} and {}",
            predictions.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        if p.len() != t.len() {
            return Err(Error::invalid(
                "prediction and truth dimensions disagree".to_string(),
            ));
        }
        total += p
            .iter()
            .zip(t)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / predictions.len() as f64)
}
