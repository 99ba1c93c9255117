use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use trace_contam_core::corpus::write_corpus;
use trace_contam_core::{apply_tabular, generate_corpus, PerturbationRecord, TableArtifact};

const TABLE: &str = include_str!("../../core/tests/fixtures/revenue.csv");

fn run(args: &[&str], paths: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trace-contam"));
    cmd.args(args);
    for p in paths {
        cmd.arg(p);
    }
    cmd.output().expect("binary runs")
}

fn corpus(root: &Path) -> std::path::PathBuf {
    let dir = root.join("corpus");
    write_corpus(&dir, &generate_corpus(2, 11)).unwrap();
    dir
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = corpus(tmp.path());
    let cfg = tmp.path().join("analysis.toml");
    fs::write(&cfg, "epsilon = 0.2\ntime_base = \"perturbed\"\n[comparator]\nmode = \"normalized\"\n").unwrap();
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_trace-contam"))
        .args(["batch", "--corpus"])
        .arg(&dir)
        .arg("--out")
        .arg(&out)
        .arg("--config")
        .arg(&cfg)
        .args(["--epsilon", "0.1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let echo = &report["config_echo"];
    assert_eq!(echo["epsilon"], 0.1);
    assert_eq!(echo["time_base"], "perturbed");
    assert_eq!(echo["comparator"]["mode"], "normalized");
    assert_eq!(report["pairs"], 12);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = corpus(tmp.path());
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "epsilonn = 0.2\n").unwrap();
    let o = run(&["batch", "--corpus"], &[&dir]);
    assert_eq!(o.status.code(), Some(2), "missing --out");
    let o = Command::new(env!("CARGO_BIN_EXE_trace-contam"))
        .args(["batch", "--corpus"])
        .arg(&dir)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn tolerance_without_numeric_comparator_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = corpus(tmp.path());
    let t = dir.join("task_0");
    let o = Command::new(env!("CARGO_BIN_EXE_trace-contam"))
        .arg("analyze")
        .arg("--clean")
        .arg(t.join("clean.trace"))
        .arg("--perturbed")
        .arg(t.join("perturbed.trace"))
        .args(["--tolerance", "0.5"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_out_matches_stdout() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = corpus(tmp.path());
    let t = dir.join("task_3");
    let (c, p) = (t.join("clean.trace"), t.join("perturbed.trace"));
    let stdout = run(&["analyze", "--clean"], &[&c]);
    assert_eq!(stdout.status.code(), Some(2), "--perturbed is required");
    let printed = Command::new(env!("CARGO_BIN_EXE_trace-contam"))
        .arg("analyze")
        .arg("--clean")
        .arg(&c)
        .arg("--perturbed")
        .arg(&p)
        .output()
        .unwrap();
    let file = tmp.path().join("pair.json");
    let written = Command::new(env!("CARGO_BIN_EXE_trace-contam"))
        .arg("analyze")
        .arg("--clean")
        .arg(&c)
        .arg("--perturbed")
        .arg(&p)
        .arg("--out")
        .arg(&file)
        .output()
        .unwrap();
    assert_eq!(written.status.code(), Some(0));
    assert_eq!(fs::read(&file).unwrap(), printed.stdout);
    let record: Value = serde_json::from_slice(&printed.stdout).unwrap();
    assert_eq!(record["task_id"], "task_3");
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = corpus(tmp.path());
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(&["batch", "--corpus"], &[&dir, Path::new("--out"), &blocker.join("out")]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn perturb_writes_artifact_and_record() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("revenue.csv");
    fs::write(&csv, TABLE).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_trace-contam"))
        .arg("perturb")
        .arg("--artifact")
        .arg(&csv)
        .args(["--op", "numeric_noise", "--seed", "9", "--param", "k=2", "--affected-id", "input_0"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("revenue.numeric_noise.9.csv");
    let record = PerturbationRecord::from_json(&fs::read_to_string(tmp.path().join("revenue.numeric_noise.9.csv.record.json")).unwrap())
        .unwrap();

    let params = BTreeMap::from([("k".to_string(), "2".to_string())]);
    let (expected, rec) = apply_tabular(&TableArtifact::from_csv(TABLE).unwrap(), "numeric_noise", &params, 9).unwrap();
    assert_eq!(fs::read_to_string(&out).unwrap(), expected.to_csv());
    assert_eq!(record.locus, rec.locus);
    assert_eq!(record.params["k"], "2");
    assert_eq!(record.affected_ids, vec!["input_0".to_string()]);

    let bad = run(&["perturb", "--op", "numeric_noise", "--seed", "1", "--param", "k=0", "--artifact"], &[&csv]);
    assert_eq!(bad.status.code(), Some(2));
    let wrong = run(&["perturb", "--op", "ocr_noise", "--seed", "1", "--artifact"], &[&csv]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn validate_reports_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = corpus(tmp.path());
    let src = fs::read_to_string(dir.join("task_0").join("clean.trace")).unwrap();
    let broken = tmp.path().join("gap.trace");
    fs::write(&broken, src.replacen("{\"index\":0,", "{\"index\":7,", 1)).unwrap();
    let o = run(&["validate", "--trace"], &[&broken]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("index gap") || String::from_utf8_lossy(&o.stderr).contains("index gap"));
}

#[test]
fn catalog_lists_every_operator() {
    let o = run(&["catalog"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), trace_contam_core::catalog().len());
    assert!(text.contains("tool_truncation"));
}
