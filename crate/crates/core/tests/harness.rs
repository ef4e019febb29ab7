use std::fs;
use std::path::Path;

use vqa_anatomy::data::{generate_synthetic, read_predictions, SyntheticTaskConfig};
use vqa_anatomy::harness::{
    emit_report, run_experiment, run_grid, ExperimentConfig, ExperimentResult, GridConfig, Report,
    RunOptions, Status,
};

const TINY: &str = "\
seed = 3
model.preset = desk
model.encoder = gru
model.hidden = 16
model.embed_dim = 8
model.attention_hidden = 16
model.question_proj = 16
model.visual_proj = 16
train.epochs = 2
train.batch_size = 32
";

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn synthetic_body(extra: &str) -> String {
    format!("{TINY}data.source = synthetic\ndata.synthetic.train = 120\ndata.synthetic.val = 40\n{extra}")
}

#[test]
fn run_writes_result_log_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::load(&write(dir.path(), "tiny.cfg", &synthetic_body(""))).unwrap();
    let out = dir.path().join("out");
    let result = run_experiment(&cfg, &out, RunOptions::default()).unwrap();

    let run_dir = out.join("tiny");
    assert_eq!(ExperimentResult::read(&run_dir.join("result.json")).unwrap(), result);
    assert_eq!(result.status, Status::Ok);
    assert_eq!(result.seed, 3);
    assert_eq!(result.wall_seconds, None);
    assert!((0.0..=1.0).contains(&result.val_accuracy));
    let log = fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch,lr_multiplier,mean_loss,train_acc,val_acc\n"));
    assert_eq!(read_predictions(&run_dir.join("val_predictions.json")).unwrap().len(), 40);

    let timed = run_experiment(&cfg, &dir.path().join("timed"), RunOptions { record_wall_time: true }).unwrap();
    assert!(timed.wall_seconds.is_some_and(|s| s > 0.0));
    assert_eq!(timed.val_accuracy, result.val_accuracy);
}

#[test]
fn invalid_config_leaves_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(&write(dir.path(), "bad.cfg", &synthetic_body(""))).unwrap();
    cfg.model.fusion = "outer_product".into();
    let out = dir.path().join("out");
    let err = run_experiment(&cfg, &out, RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("outer_product"), "{err}");
    assert!(!out.exists());

    let loaded = ExperimentConfig::load(&write(
        dir.path(),
        "mismatch.cfg",
        &synthetic_body("model.fusion = sum\nmodel.visual_proj = 8\n"),
    ));
    assert!(loaded.is_err());
}

#[test]
fn grid_runs_every_cell_then_skips_finished_ones() {
    let dir = tempfile::tempdir().unwrap();
    let body = synthetic_body("grid.model.fusion = mult, concat\ngrid.baseline = fusion-mult\n");
    let grid = GridConfig::load(&write(dir.path(), "fusion.grid", &body)).unwrap();
    let out = dir.path().join("out");
    let first = run_grid(&grid, &out, 1, RunOptions::default()).unwrap();
    assert!(first.failures().is_empty());
    assert_eq!(first.report.rows.len(), 2);
    let baseline = first.report.rows.iter().find(|r| r.name == "fusion-mult").unwrap();
    assert_eq!(baseline.delta, Some(0.0));

    let md = fs::read_to_string(out.join("fusion/report.md")).unwrap();
    assert!(md.contains("| name | params | train | val | Δ |"));
    assert!(md.contains("+0.0000"));
    let csv = fs::read_to_string(out.join("fusion/report.csv")).unwrap();
    let (types, rows) = Report::rows_from_csv(&csv, "report.csv").unwrap();
    assert!(types.is_empty());
    assert_eq!(rows, first.report.rows);

    let stamp = |name: &str| fs::metadata(out.join("fusion").join(name).join("result.json")).unwrap().modified().unwrap();
    let before = (stamp("fusion-mult"), stamp("fusion-concat"));
    let second = run_grid(&grid, &out, 2, RunOptions::default()).unwrap();
    assert_eq!((stamp("fusion-mult"), stamp("fusion-concat")), before);
    assert_eq!(second.report, first.report);
    assert_eq!(emit_report(&out.join("fusion")).unwrap(), first.report);
}

#[test]
fn failing_cell_is_recorded_and_others_finish() {
    let dir = tempfile::tempdir().unwrap();
    let task = SyntheticTaskConfig {
        train: 120,
        val: 40,
        ..SyntheticTaskConfig::default()
    };
    generate_synthetic(&task, 1).unwrap().write(dir.path()).unwrap();
    let good = fs::read(dir.path().join("val_features.vqrf")).unwrap();
    fs::write(dir.path().join("broken.vqrf"), &good[..good.len() / 2]).unwrap();

    let body = format!(
        "{TINY}data.source = vqa
data.train.questions = train_questions.json
data.train.annotations = train_annotations.json
data.train.features = train_features.vqrf
data.val.questions = val_questions.json
data.val.annotations = val_annotations.json
grid.data.val.features = val_features.vqrf, broken.vqrf
grid.baseline = features-val_features.vqrf
"
    );
    let grid = GridConfig::load(&write(dir.path(), "files.grid", &body)).unwrap();
    let out = dir.path().join("out");
    let outcome = run_grid(&grid, &out, 1, RunOptions::default()).unwrap();

    let failures = outcome.failures();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].0, "features-broken.vqrf");
    let stored = ExperimentResult::read(&out.join("files/features-broken.vqrf/result.json")).unwrap();
    assert_eq!(stored.status, Status::Failed);
    assert!(stored.error.unwrap().contains("broken.vqrf"));

    assert_eq!(outcome.report.rows.len(), 1);
    assert_eq!(outcome.report.failed.len(), 1);
    assert_eq!(outcome.report.per_type_columns[0], "yes/no");
    let md = fs::read_to_string(out.join("files/report.md")).unwrap();
    assert!(md.contains("Failed:") && md.contains("features-broken.vqrf"));
}
