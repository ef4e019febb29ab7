use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/vqa")
}

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vqa-anatomy"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VQA_ANATOMY_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn score_prints_overall_and_per_type() {
    let dir = tempfile::tempdir().unwrap();
    let (p, a) = (fixtures().join("predictions.json"), fixtures().join("annotations.json"));
    let args = [p.to_str().unwrap(), a.to_str().unwrap()];

    let o = cli(&["score", args[0], args[1]], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("overall  0.6667  (3 questions)"), "{text}");
    assert!(text.contains("yes/no   0.6667"), "{text}");
    assert!(text.contains("number   1.0000"), "{text}");
    assert!(text.contains("other    0.3333"), "{text}");

    let o = cli(&["score", "--leave-one-out", args[0], args[1]], dir.path());
    assert!(stdout(&o).contains("overall  0.6333"), "{}", stdout(&o));
}

#[test]
fn score_rejects_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.json");
    fs::write(&preds, r#"[{"question_id": 1, "answer": "yes"}, {"question_id": 99, "answer": "no"}]"#).unwrap();
    let o = cli(
        &["score", preds.to_str().unwrap(), fixtures().join("annotations.json").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("99"), "{}", stderr(&o));
}

#[test]
fn invalid_config_fails_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "data.source = synthetic\nmodel.fusion = bilinear\n").unwrap();
    let o = cli(&["run", "bad.cfg", "--out", "results"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bilinear"), "{}", stderr(&o));
    assert!(!dir.path().join("results").exists());

    fs::write(dir.path().join("typo.cfg"), "data.source = synthetic\nmodel.fusoin = mult\n").unwrap();
    let o = cli(&["run", "typo.cfg"], dir.path());
    assert!(stderr(&o).contains("model.fusoin"), "{}", stderr(&o));
}

#[test]
fn synth_then_run_on_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["synth", "data", "--train", "80", "--val", "20", "--seed", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["train_questions.json", "val_annotations.json", "train_features.vqrf"] {
        assert!(dir.path().join("data").join(f).is_file(), "{f}");
    }

    fs::write(
        dir.path().join("files.cfg"),
        "model.encoder = gru\nmodel.hidden = 8\nmodel.embed_dim = 8\nmodel.question_proj = 8\n\
         model.visual_proj = 8\ntrain.epochs = 1\ndata.source = vqa\n\
         data.train.questions = data/train_questions.json\ndata.train.annotations = data/train_annotations.json\n\
         data.train.features = data/train_features.vqrf\ndata.val.questions = data/val_questions.json\n\
         data.val.annotations = data/val_annotations.json\ndata.val.features = data/val_features.vqrf\n",
    )
    .unwrap();
    let o = cli(&["--quiet", "--seed", "11", "run", "files.cfg", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("files: params"), "{}", stdout(&o));
    let result = fs::read_to_string(dir.path().join("out/files/result.json")).unwrap();
    assert!(result.contains("\"seed\": 11"), "{result}");

    let o = cli(&["report", "out/files"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("| files |"), "{}", stdout(&o));
    assert!(dir.path().join("out/files/report.csv").is_file());
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["report", "."], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no results"), "{}", stderr(&o));
}
