use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, GridCell, GridConfig};
use super::report::{emit_report, Report};
use crate::data::{generate_synthetic, write_json, write_predictions, Dataset};
use crate::error::{Error, Result};
use crate::model::{DataShape, VqaModel};
use crate::training::{evaluate, predict, seeded_rng, train, INIT_STREAM};

pub const RESULT_FILE: &str = "result.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const PREDICTIONS_FILE: &str = "val_predictions.json";
pub const BASELINE_FILE: &str = "baseline.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// Contents of `result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub config: ExperimentConfig,
    pub parameter_count: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// Validation accuracy per answer type.
    pub per_type: BTreeMap<String, f64>,
    pub wall_seconds: Option<f64>,
    pub seed: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentResult {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            location: format!("line {}", e.line()),
            detail: e.to_string(),
        })
    }

    /// Writes through a temporary file so a crash never leaves a
    /// half-written success marker.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        write_json(&tmp, &serde_json::to_value(self)?)?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record elapsed time in `wall_seconds`; results are then no longer
    /// byte-reproducible.
    pub record_wall_time: bool,
}

pub fn load_dataset(source: &DataSource, seed: u64) -> Result<Dataset> {
    match source {
        DataSource::Synthetic { task, seed: data_seed } => {
            Dataset::from_synthetic(generate_synthetic(task, data_seed.unwrap_or(seed))?)
        }
        DataSource::Vqa { train, val } => Dataset::load(train, val),
    }
}

/// Trains and evaluates one experiment, writing `result.json`,
/// `train_log.csv` and `val_predictions.json` under `out_root/<name>`.
/// Nothing is written when the config is invalid.
pub fn run_experiment(config: &ExperimentConfig, out_root: &Path, options: RunOptions) -> Result<ExperimentResult> {
    config.validate()?;
    let started = Instant::now();
    let data = load_dataset(&config.data, config.seed())?;
    let shape = DataShape::from_splits(&data.train, &data.val, config.model.answer_vocab)?;
    let mut model = VqaModel::build(&config.model, shape, &mut seeded_rng(config.seed(), INIT_STREAM))?;
    log::info!(
        "{}: {} trainable parameters, {} train / {} val questions",
        config.name,
        model.count_parameters(),
        data.train.len(),
        data.val.len()
    );

    let dir = out_root.join(&config.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let log = train(&mut model, &data, &config.train, &config.schedule)?;
    log.write_csv(&dir.join(TRAIN_LOG_FILE))?;
    let train_eval = evaluate(&model, &data.train, config.accuracy_rule)?;
    let val_eval = evaluate(&model, &data.val, config.accuracy_rule)?;
    write_predictions(&dir.join(PREDICTIONS_FILE), &predict(&model, &data.val)?)?;

    let result = ExperimentResult {
        name: config.name.clone(),
        config: config.clone(),
        parameter_count: model.count_parameters(),
        train_accuracy: train_eval.overall,
        val_accuracy: val_eval.overall,
        per_type: val_eval.per_type,
        wall_seconds: options.record_wall_time.then(|| started.elapsed().as_secs_f64()),
        seed: config.seed(),
        status: Status::Ok,
        error: None,
    };
    result.write(&dir.join(RESULT_FILE))?;
    log::info!(
        "{}: train {:.4}  val {:.4}",
        result.name,
        result.train_accuracy,
        result.val_accuracy
    );
    Ok(result)
}

/// A finished result for this exact config, if one is on disk.
fn completed(dir: &Path, config: &ExperimentConfig) -> Option<ExperimentResult> {
    let r = ExperimentResult::read(&dir.join(RESULT_FILE)).ok()?;
    if r.status != Status::Ok {
        return None;
    }
    if r.config != *config {
        log::warn!("{}: stored result has a different config; rerunning", r.name);
        return None;
    }
    Some(r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    pub dir: PathBuf,
    pub cells: Vec<(GridCell, std::result::Result<ExperimentResult, String>)>,
    pub report: Report,
}

impl GridOutcome {
    pub fn failures(&self) -> Vec<(&str, &str)> {
        self.cells
            .iter()
            .filter_map(|(c, r)| r.as_ref().err().map(|e| (c.name.as_str(), e.as_str())))
            .collect()
    }
}

/// Runs every cell of `grid` under `out_root/<grid name>`, at most `jobs`
/// at a time. Cells with a finished `result.json` for the same config are
/// not rerun. A failing cell is recorded and the rest continue.
pub fn run_grid(grid: &GridConfig, out_root: &Path, jobs: usize, options: RunOptions) -> Result<GridOutcome> {
    let cells = grid.cells()?;
    log::info!("grid {}: {} cells, baseline {}", grid.name, cells.len(), grid.baseline);
    let dir = out_root.join(&grid.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    fs::write(dir.join(BASELINE_FILE), format!("{}\n", grid.baseline))
        .map_err(|e| Error::io(&dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                if let Some(done) = completed(&dir.join(&cell.name), &cell.config) {
                    log::info!("{}: already complete, skipping", cell.name);
                    return Ok(done);
                }
                run_experiment(&cell.config, &dir, options).map_err(|e| {
                    log::error!("{}: {e}", cell.name);
                    let failed = ExperimentResult {
                        name: cell.name.clone(),
                        config: cell.config.clone(),
                        parameter_count: 0,
                        train_accuracy: 0.0,
                        val_accuracy: 0.0,
                        per_type: BTreeMap::new(),
                        wall_seconds: None,
                        seed: cell.config.seed(),
                        status: Status::Failed,
                        error: Some(e.to_string()),
                    };
                    let cell_dir = dir.join(&cell.name);
                    if fs::create_dir_all(&cell_dir).is_ok() {
                        let _ = failed.write(&cell_dir.join(RESULT_FILE));
                    }
                    e.to_string()
                })
            })
            .collect()
    });
    let report = emit_report(&dir)?;
    Ok(GridOutcome {
        dir,
        cells: cells.into_iter().zip(results).collect(),
        report,
    })
}
