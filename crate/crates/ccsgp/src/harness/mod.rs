//! Experiment harness: configuration, cell execution, and result
//! persistence for method-comparison sweeps.

pub mod config;
pub mod results;
pub mod run;

pub use config::{ExperimentConfig, OptimizerConfig, SCHEMA_VERSION};
pub use results::{
    format_summary, mse, read_csv, read_json, summarize, write_json, CellFailure,
    CsvAppender, ExperimentResult, SummaryRow, SweepReport, CSV_HEADER,
};
pub use run::{run_cell, run_sweep};
