use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdfa_distill::{EvalReport, Pdfa, Token};

const BIN: &str = env!("CARGO_BIN_EXE_pdfa-distill");
const MOCK: &str = env!("CARGO_BIN_EXE_mock-teacher");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write_one_state(dir: &Path) -> PathBuf {
    let p = Pdfa::builder(1, 2)
        .stop(0, 0.4)
        .edge(0, Token(0), 0, 0.35)
        .edge(0, Token(1), 0, 0.25)
        .build()
        .unwrap();
    let path = dir.join("one.json");
    std::fs::write(&path, p.to_json()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn learn_writes_artifacts_and_reports_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let sul = write_one_state(dir.path());
    let (out, dot, log) = (dir.path().join("h.json"), dir.path().join("h.dot"), dir.path().join("run.jsonl"));
    let res = cli(&["learn", "--teacher-pdfa", s(&sul), "--seed", "1", "--out", s(&out), "--dot", s(&dot), "--log", s(&log)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let h = Pdfa::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(h.n_states(), 1);
    assert_eq!(h.symbols(), ["0", "1"]);
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));
    let lines = std::fs::read_to_string(&log).unwrap();
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("reds").is_some() && v.get("basis_complete").is_some());
    }
}

#[test]
fn early_stop_exit_code() {
    let res = cli(&["learn", "--teacher-pdfa", s(&fixture("three_state.json")), "--max-extends", "1"]);
    assert_eq!(res.status.code(), Some(3));
    // hypothesis goes to stdout without --out
    assert!(Pdfa::from_json(&String::from_utf8(res.stdout).unwrap()).is_ok());
}

#[test]
fn usage_errors() {
    let res = cli(&["learn"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("Usage"));

    let three_state = fixture("three_state.json");
    let res = cli(&["learn", "--teacher-pdfa", s(&three_state), "--mu", "1.5"]);
    assert_eq!(res.status.code(), Some(2));
    let res = cli(&["learn", "--teacher-pdfa", s(&three_state), "--teacher-cmd", "true"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn teacher_failure_exit_code() {
    let res = cli(&["learn", "--teacher-cmd", "exit 0"]);
    assert_eq!(res.status.code(), Some(4));
    let res = cli(&["learn", "--teacher-cmd", r#"read l; echo '{"type":"hello","alphabet_size":2}'; read l; echo '{"id":1,"p":1.5}'"#]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).contains("1.5"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let three_state = fixture("three_state.json");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("h{i}.json"));
        let log = dir.path().join(format!("r{i}.jsonl"));
        cli(&["learn", "--teacher-pdfa", s(&three_state), "--mu", "1e-3", "--max-extends", "4", "--seed", "3", "--out", s(&out), "--log", s(&log)]);
        outputs.push((std::fs::read(&out).unwrap(), std::fs::read(&log).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn learn_through_subprocess_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let sul = write_one_state(dir.path());
    let cmd = format!("'{MOCK}' '{}'", s(&sul));
    let res = cli(&["learn", "--teacher-cmd", &cmd, "--out", s(&dir.path().join("h.json"))]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
}

fn eval_report(args: &[&str]) -> EvalReport {
    let res = cli(args);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    serde_json::from_slice(&res.stdout).unwrap()
}

#[test]
fn eval_identical_hypothesis() {
    let three_state = fixture("three_state.json");
    let r = eval_report(&["eval", "--hypothesis", s(&three_state), "--teacher-pdfa", s(&three_state), "--sample", "500", "--seed", "1"]);
    assert_eq!(r.mse, 0.0);
    assert_eq!(r.n_strings, 500);
    assert_eq!(r.hypothesis_states, 3);
}

#[test]
fn eval_single_string_error() {
    let dir = tempfile::tempdir().unwrap();
    let three_state = Pdfa::from_json(&std::fs::read_to_string(fixture("three_state.json")).unwrap()).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&three_state.to_json()).unwrap();
    doc["states"][0]["stop"] = serde_json::json!(0.11);
    doc["states"][0]["edges"][0]["p"] = serde_json::json!(0.29);
    let h = dir.path().join("h.json");
    std::fs::write(&h, doc.to_string()).unwrap();
    let set = dir.path().join("test.txt");
    std::fs::write(&set, "1 2\n0\n").unwrap();
    let out = dir.path().join("report.json");
    let r = eval_report(&["eval", "--hypothesis", s(&h), "--teacher-pdfa", s(&fixture("three_state.json")), "--test-set", s(&set), "--out", s(&out)]);
    assert!((r.mse - 1e-4).abs() < 1e-12);
    assert!(out.exists());
}

#[test]
fn eval_against_reference_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("test.txt");
    std::fs::write(&set, "2 2\n0 0.1\n1 1 0.18\n").unwrap();
    let r = eval_report(&["eval", "--hypothesis", s(&fixture("three_state.json")), "--test-set", s(&set)]);
    assert!(r.mse < 1e-30);

    std::fs::write(&set, "1 2\n3 0 1\n").unwrap();
    let res = cli(&["eval", "--hypothesis", s(&fixture("three_state.json")), "--test-set", s(&set)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

#[test]
fn random_pdfa_is_reproducible() {
    let a = cli(&["random-pdfa", "--states", "10", "--alphabet", "4", "--seed", "7"]);
    let b = cli(&["random-pdfa", "--states", "10", "--alphabet", "4", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(Pdfa::from_json(&String::from_utf8(a.stdout).unwrap()).unwrap().n_states(), 10);
    assert_eq!(cli(&["random-pdfa", "--states", "0", "--alphabet", "4"]).status.code(), Some(2));
}
