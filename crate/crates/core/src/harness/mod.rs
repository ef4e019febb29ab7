//! Config-driven experiments, ablation grids, reports and standalone
//! scoring.

mod config;
mod report;
mod run;

pub use config::{check_name, parse_entries, DataSource, Entry, ExperimentConfig, GridCell, GridConfig};
pub use report::{collect_results, emit_report, Report, ReportRow, CSV_FILE, MARKDOWN_FILE};
pub use run::{
    load_dataset, run_experiment, run_grid, ExperimentResult, GridOutcome, RunOptions, Status,
    BASELINE_FILE, PREDICTIONS_FILE, RESULT_FILE, TRAIN_LOG_FILE,
};

use std::path::Path;

use crate::data::{parse_annotations, read_predictions};
use crate::error::Result;
use crate::metrics::{score, AccuracyRule, EvalResult};

/// Scores a prediction file against an annotation file without a model.
pub fn score_predictions(predictions: &Path, annotations: &Path, rule: AccuracyRule) -> Result<EvalResult> {
    score(&read_predictions(predictions)?, &parse_annotations(annotations)?, rule)
}
