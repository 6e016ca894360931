use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use groupnet::model::save_checkpoint;
use groupnet::{build_model, GroupNetArch};

fn gdnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdnn"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic archive plus a narrow architecture so training takes seconds.
fn setup(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data.gdds");
    ok(&gdnn(
        &["prepare-data", "--synthetic", "24", "--classes", "2", "--seed", "7", "--out", s(&data)],
        dir,
    ));
    let mut arch = GroupNetArch::default().with_groups(4, 2);
    arch.num_classes = 2;
    let arch_path = dir.join("arch.json");
    std::fs::write(&arch_path, serde_json::to_string(&arch).unwrap()).unwrap();
    (data, arch_path)
}

fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let (data, arch) = setup(dir);
    let out = dir.join("run");
    ok(&gdnn(
        &[
            "train", "--data", s(&data), "--arch", s(&arch), "--out-dir", s(&out), "--epochs", "2", "--batch-size", "8",
        ],
        dir,
    ));
    (out.join("model.gdnn"), data)
}

#[test]
fn prepare_data_is_deterministic_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.gdds"), dir.path().join("b.gdds"));
    for p in [&a, &b] {
        ok(&gdnn(
            &["prepare-data", "--synthetic", "200", "--classes", "2", "--seed", "7", "--out", s(p)],
            dir.path(),
        ));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.gdds.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "prepare-data");
    assert_eq!(manifest["seeds"][0], 7);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn truncated_cifar_batch_is_an_ingestion_error() {
    let dir = tempfile::tempdir().unwrap();
    let cifar = dir.path().join("cifar");
    std::fs::create_dir(&cifar).unwrap();
    let record = {
        let mut r = vec![3u8];
        r.extend(vec![128u8; 3072]);
        r
    };
    for name in ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"] {
        std::fs::write(cifar.join(name), &record).unwrap();
    }
    let mut broken = record.clone();
    broken.extend(vec![0u8; 3072]);
    std::fs::write(cifar.join("data_batch_3.bin"), &broken).unwrap();
    let out = gdnn(&["prepare-data", "--cifar-dir", s(&cifar), "--val", "1", "--out", "x.gdds"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("3073"), "{err}");
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdnn(
        &["report", "--model", "nope.gdnn", "--data", "nope.gdds", "--profile", "p.csv", "--out-dir", "r"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(gdnn(&["train"], dir.path()).status.code(), Some(2));
}

#[test]
fn train_eval_profile_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (model, data) = trained(dir.path());
    let run = dir.path().join("run");
    let steps = std::fs::read_to_string(run.join("steps.csv")).unwrap();
    assert!(steps.starts_with("step,epoch,val_accuracy,chosen,repeats\n"));
    assert!(run.join("train.manifest.json").exists());

    let all = ok(&gdnn(&["eval", "--model", s(&model), "--data", s(&data), "--config", "all"], dir.path()));
    let lines: Vec<&str> = all.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("config_pct,k,accuracy"));
    assert!(lines[4].starts_with("100,4,"));

    let full = ok(&gdnn(&["eval", "--model", s(&model), "--data", s(&data), "--config", "100"], dir.path()));
    let row: Vec<&str> = full.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[6], "1.000000");

    let profile = dir.path().join("host.csv");
    let stats = ok(&gdnn(
        &["profile", "--model", s(&model), "--data", s(&data), "--reps", "3", "--samples", "2", "--out", s(&profile)],
        dir.path(),
    ));
    assert_eq!(stats.lines().count(), 5);
    let host = std::fs::read_to_string(&profile).unwrap();
    assert_eq!(host.lines().count(), 5);
    assert!(host.lines().nth(1).unwrap().starts_with("host,host,0,25,"));
    let reps = gdnn(&["profile", "--model", s(&model), "--data", s(&data), "--reps", "2", "--out", "x.csv"], dir.path());
    assert_eq!(reps.status.code(), Some(3));

    let report = dir.path().join("report");
    ok(&gdnn(
        &[
            "report", "--model", s(&model), "--data", s(&data), "--profile", &fixture("synthetic_xu3.csv"), "--out-dir",
            s(&report),
        ],
        dir.path(),
    ));
    let fig2 = std::fs::read_to_string(report.join("fig2.csv")).unwrap();
    assert_eq!(fig2.lines().count(), 5);
    let fig5 = std::fs::read_to_string(report.join("fig5.csv")).unwrap();
    assert_eq!(fig5.lines().count(), 1 + 116);
    let summary = std::fs::read_to_string(report.join("summary.csv")).unwrap();
    let ours: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(ours[0], "Proposed w/o D&T");
    assert_eq!(ours[2], "75.0");
    assert_eq!(ours[3], "4.0000");
    let arch = GroupNetArch { num_classes: 2, ..GroupNetArch::default() }.with_groups(4, 2);
    let expected_kb = arch.model_size_bytes(4).unwrap() as f64 / 1e3;
    let size: f64 = ours[5].parse().unwrap();
    let file: f64 = ours[6].parse().unwrap();
    assert!((size - expected_kb).abs() <= 0.05 * expected_kb);
    assert!(file >= expected_kb);
}

#[test]
fn untrained_width_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = setup(dir.path());
    let mut arch = GroupNetArch::default().with_groups(4, 2);
    arch.num_classes = 2;
    let model = dir.path().join("blank.gdnn");
    save_checkpoint(&build_model(arch).unwrap(), &model).unwrap();
    let out = gdnn(&["eval", "--model", s(&model), "--data", s(&data), "--config", "50"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn govern_table1_and_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&gdnn(&["govern", "--profile", &fixture("table1.csv"), "--budget", "33"], dir.path()));
    assert!(out.contains("core: GPU"), "{out}");
    assert!(out.contains("config_pct: 100"));
    assert!(out.contains("latency_ms: 4.88"));
    assert!(dir.path().join("govern.manifest.json").exists());

    let bad = gdnn(&["govern", "--profile", &fixture("table1.csv"), "--budget", "1"], dir.path());
    assert_eq!(bad.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("4.88"));

    let out = ok(&gdnn(
        &["govern", "--profile", &fixture("synthetic_xu3.csv"), "--budget", "1000", "--knobs", "config"],
        dir.path(),
    ));
    assert!(out.contains("range_time_ms: 4.0000x"), "{out}");
}
