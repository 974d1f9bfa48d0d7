use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bmi_curate::synthetic::{generate, write_images, CorpusSpec};

fn corpus(dir: &Path) -> PathBuf {
    let spec = CorpusSpec {
        subjects: 60,
        outlier_pose: 12,
        small_person: 12,
        low_confidence: 6,
        low_confidence_overlap: 2,
        ..CorpusSpec::default()
    };
    let c = generate(&spec).unwrap();
    let manifest = dir.join("manifest.jsonl");
    let text: String = c.records.iter().map(|r| r.to_json_line() + "\n").collect();
    std::fs::write(&manifest, text).unwrap();
    write_images(&c.records, dir).unwrap();
    manifest
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmi-curate")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn model() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/model/tiny_bmi.onnx")
        .to_string_lossy()
        .into_owned()
}

#[test]
fn full_run_then_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path());
    let out = dir.path().join("out");
    let args = ["run", "--manifest", m.to_str().unwrap(), "--output-dir", out.to_str().unwrap(), "--json"];
    let first = cli(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let report: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(report["conservation"]["holds"], true);
    assert_eq!(report["split"]["overlapping_subjects"], 0);
    assert!(stderr(&first).contains("ingest   ran"));

    let second = cli(&args);
    assert_eq!(second.status.code(), Some(0));
    assert!(!stderr(&second).contains(" ran"), "{}", stderr(&second));
    assert_eq!(second.stdout, first.stdout);
    assert!(out.join("artifacts.json").is_file());
}

#[test]
fn overrides_reach_the_stages() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path());
    let out = dir.path().join("out");
    let o = cli(&[
        "split",
        "--manifest", m.to_str().unwrap(),
        "--output-dir", out.to_str().unwrap(),
        "--ratios", "0.5,0.25,0.25",
        "--seed", "9",
        "--min-confidence", "0.5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let header: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(out.join("split/split.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["seed"], 9);
    assert_eq!(header["ratios"], serde_json::json!([0.5, 0.25, 0.25]));
    assert!(out.join("crop/.stage.json").is_file());
    assert!(!out.join("report").exists());
}

#[test]
fn config_file_with_eval() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "manifest": "manifest.jsonl",
            "output_dir": "results",
            "perspectives": ["full_body"],
            "eval": { "model": model() }
        })
        .to_string(),
    )
    .unwrap();
    let o = cli(&["eval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("results/eval/metrics.json")).unwrap()).unwrap();
    assert!(metrics["n"].as_u64().unwrap() > 0);
    assert_eq!(metrics["perspective"], "full_body");
    assert_eq!(metrics["split"], "test");
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path());
    let out = dir.path().join("out");
    let bad_ratios = cli(&["run", "--manifest", m.to_str().unwrap(), "--output-dir", out.to_str().unwrap(), "--ratios", "0.7,0.1,0.1"]);
    assert_eq!(bad_ratios.status.code(), Some(1));
    assert!(stderr(&bad_ratios).contains("[invalid_ratios]"), "{}", stderr(&bad_ratios));
    assert!(!out.exists());

    assert_eq!(cli(&["run", "--manifest", "/nonexistent/manifest.jsonl"]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["eval", "--manifest", m.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(cli(&["run", "--perspectives", "side_view", "--manifest", m.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn stage_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path());
    let bogus = dir.path().join("bogus.onnx");
    std::fs::write(&bogus, b"not a model").unwrap();
    let out = dir.path().join("out");
    let o = cli(&[
        "eval",
        "--manifest", m.to_str().unwrap(),
        "--output-dir", out.to_str().unwrap(),
        "--model", bogus.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("[corrupt_model]"));
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval/.stage.json")).unwrap()).unwrap();
    assert_eq!(sidecar["status"], "failed");
    assert_eq!(sidecar["error"]["code"], "corrupt_model");
}
