//! Black-box tests of the command-line surface: exit codes, record formats,
//! file outputs, and the retrieval/masking round trips through raster and
//! bank files.

use std::path::Path;
use std::process::{Command, Output};

fn radmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radmem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn field(line: &str, key: &str) -> String {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("no field {key} in: {line}"))
}

#[test]
fn usage_errors_exit_2_runtime_errors_exit_1() {
    assert_eq!(radmem(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(radmem(&["pipeline", "--bogus"]).status.code(), Some(2));
    assert_eq!(radmem(&["sweep", "--param", "nonsense", "--values", "1"]).status.code(), Some(2));
    let out = radmem(&[
        "evaluate",
        "--candidates",
        "/definitely/not/here.txt",
        "--references",
        "/definitely/not/here.txt",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn evaluate_identical_files_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reports.txt");
    std::fs::write(
        &path,
        "the heart size is normal .\nno pleural effusion is seen today .\n",
    )
    .unwrap();
    let out = radmem(&[
        "evaluate",
        "--candidates",
        path.to_str().unwrap(),
        "--references",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let line = stdout(&out);
    assert_eq!(field(&line, "bleu4"), "1.000000");
    assert_eq!(field(&line, "bleu1"), "1.000000");
    assert_eq!(field(&line, "rouge_l"), "1.000000");
}

#[test]
fn evaluate_with_labels_reports_ce() {
    let dir = tempfile::tempdir().unwrap();
    let reports = dir.path().join("r.txt");
    std::fs::write(&reports, "a b c d .\n").unwrap();
    let pred = dir.path().join("pred.csv");
    let truth = dir.path().join("true.csv");
    std::fs::write(&pred, "1,0,1,1,0,0,0,0,0,0,0,0,0,0\n").unwrap();
    std::fs::write(&truth, "1,1,1,0,0,0,0,0,0,0,0,0,0,0\n").unwrap();
    let out = radmem(&[
        "evaluate",
        "--candidates",
        reports.to_str().unwrap(),
        "--references",
        reports.to_str().unwrap(),
        "--pred-labels",
        pred.to_str().unwrap(),
        "--true-labels",
        truth.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let line = stdout(&out);
    // TP=2, FP=1, FN=1.
    assert_eq!(field(&line, "ce_precision"), "0.666667");
    assert_eq!(field(&line, "ce_recall"), "0.666667");
}

fn fast_cfg_args(dir: &Path, seed: &str) -> Vec<String> {
    let _ = dir;
    vec![
        "--cases".into(),
        "12".into(),
        "--feature-dim".into(),
        "48".into(),
        "--d-out".into(),
        "48".into(),
        "--seed".into(),
        seed.into(),
    ]
}

#[test]
fn gen_corpus_writes_parallel_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("corpus");
    let mut args: Vec<String> = vec!["gen-corpus".into()];
    args.extend(fast_cfg_args(dir.path(), "9"));
    args.extend(["--out-dir".into(), out_dir.to_str().unwrap().into()]);
    let out = radmem(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success());
    let reports = std::fs::read_to_string(out_dir.join("reports.txt")).unwrap();
    let labels = std::fs::read_to_string(out_dir.join("labels.csv")).unwrap();
    let ids = std::fs::read_to_string(out_dir.join("ids.txt")).unwrap();
    assert_eq!(reports.lines().count(), 12);
    assert_eq!(labels.lines().count(), 12);
    assert_eq!(ids.lines().count(), 12);
    for row in labels.lines() {
        assert_eq!(row.split(',').count(), 14);
    }
}

#[test]
fn train_cam_mask_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let clf_path = dir.path().join("clf.bin");
    let corpus_dir = dir.path().join("corpus");

    let mut args: Vec<String> = vec!["train".into()];
    args.extend(fast_cfg_args(dir.path(), "9"));
    args.extend(["--out".into(), clf_path.to_str().unwrap().into()]);
    let out = radmem(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let f1: f64 = field(&stdout(&out), "train_micro_f1").parse().unwrap();
    assert!(f1 > 0.9, "training underfit: f1={f1}");

    let mut args: Vec<String> = vec!["gen-corpus".into()];
    args.extend(fast_cfg_args(dir.path(), "9"));
    args.extend([
        "--out-dir".into(),
        corpus_dir.to_str().unwrap().into(),
        "--write-images".into(),
    ]);
    assert!(radmem(&args.iter().map(String::as_str).collect::<Vec<_>>()).status.success());

    // Pick the first case with a positive label and map that disease.
    let labels = std::fs::read_to_string(corpus_dir.join("labels.csv")).unwrap();
    let (case_idx, class) = labels
        .lines()
        .enumerate()
        .find_map(|(i, row)| {
            row.split(',').position(|v| v == "1").map(|c| (i, c))
        })
        .expect("some case is positive");
    let image = corpus_dir.join(format!("images/case{case_idx:04}.raster"));
    let map_path = dir.path().join("cam.raster");

    let mut args: Vec<String> = vec!["cam".into()];
    args.extend(fast_cfg_args(dir.path(), "9"));
    args.extend([
        "--classifier".into(),
        clf_path.to_str().unwrap().into(),
        "--image".into(),
        image.to_str().unwrap().into(),
        "--class".into(),
        class.to_string(),
        "--out".into(),
        map_path.to_str().unwrap().into(),
    ]);
    let out = radmem(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let masked_path = dir.path().join("masked.raster");
    let out = radmem(&[
        "mask",
        "--image",
        image.to_str().unwrap(),
        "--map",
        map_path.to_str().unwrap(),
        "--tau",
        "0.5",
        "--out",
        masked_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let selected: usize = field(&stdout(&out), "selected").parse().unwrap();
    assert!(selected > 0 && selected < 196);
    assert!(masked_path.exists());
}

#[test]
fn build_bank_and_retrieve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bank_path = dir.path().join("visual.bank");

    let mut args: Vec<String> = vec!["build-bank".into()];
    args.extend(fast_cfg_args(dir.path(), "21"));
    args.extend([
        "--kind".into(),
        "visual".into(),
        "--out".into(),
        bank_path.to_str().unwrap().into(),
    ]);
    let out = radmem(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let entries: usize = field(&stdout(&out), "entries").parse().unwrap();
    assert!(entries > 0);

    let mut args: Vec<String> = vec!["retrieve".into()];
    args.extend(fast_cfg_args(dir.path(), "21"));
    args.extend([
        "--bank".into(),
        bank_path.to_str().unwrap().into(),
        "--from-pattern".into(),
        "0".into(),
        "--noise".into(),
        "0.01".into(),
    ]);
    let out = radmem(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = stdout(&out);
    let cos: f64 = field(&line, "cosine_to_source").parse().unwrap();
    assert!(cos > 0.5, "retrieval drifted: {line}");
    assert_eq!(field(&line, "bank"), "visual");

    // Report bank goes through the same front door.
    let report_path = dir.path().join("report.bank");
    let mut args: Vec<String> = vec!["build-bank".into()];
    args.extend(fast_cfg_args(dir.path(), "21"));
    args.extend([
        "--kind".into(),
        "report".into(),
        "--out".into(),
        report_path.to_str().unwrap().into(),
    ]);
    assert!(radmem(&args.iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    let mut args: Vec<String> = vec!["retrieve".into()];
    args.extend(fast_cfg_args(dir.path(), "21"));
    args.extend([
        "--bank".into(),
        report_path.to_str().unwrap().into(),
        "--from-pattern".into(),
        "1".into(),
    ]);
    let out = radmem(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success());
    assert_eq!(field(&stdout(&out), "bank"), "report");
}

#[test]
fn config_file_drives_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "n_cases = 10\nfeature_dim = 48\nd_out = 48\nseed = 4\n# comment line\nbeta = 2.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = radmem(&[
        "pipeline",
        "--config",
        conf.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "generated.txt",
        "reference.txt",
        "predicted_labels.csv",
        "true_labels.csv",
        "metrics.txt",
        "records.txt",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    assert_eq!(
        std::fs::read_to_string(out_dir.join("generated.txt")).unwrap().lines().count(),
        10
    );

    // A flag overrides the file.
    let out = radmem(&[
        "pipeline",
        "--config",
        conf.to_str().unwrap(),
        "--cases",
        "7",
    ]);
    assert!(out.status.success());
    let line = stdout(&out);
    assert!(line.contains("stage1 cases=7"), "{line}");
}
