//! End-to-end checks of the binary: exit codes, report envelope,
//! determinism, and the vector-argument grammar.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ergograph"));
    c.env_remove("ERGOGRAPH_SEED");
    c
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

fn two_state(dir: &Path) -> String {
    write(
        dir,
        "two_state.json",
        r#"{"kind":"finite","labels":["0","1"],"P":[[0.7,0.3],[0.2,0.8]]}"#,
    )
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

#[test]
fn exit_code_triple() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state(dir.path());

    // Pass.
    let ok = bin().args(["gap", "--input", &spec, "--quiet"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let r = report(&ok);
    assert!((r["results"]["delta"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    // Usage error: unknown flag must exit 1, not clap's default 2.
    let usage = bin().args(["gap", "--no-such-flag"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    let line = String::from_utf8_lossy(&usage.stderr);
    let first = line.lines().next().unwrap();
    let parsed: Value = serde_json::from_str(first).expect("stderr line is JSON");
    assert_eq!(parsed["error"]["kind"], "usage");

    // Verdict failure: periodic chain has no applicable gap.
    let cyc = write(dir.path(), "cycle2.json", r#"{"kind":"finite","P":[[0,1],[1,0]]}"#);
    let verdict = bin().args(["gap", "--input", &cyc, "--quiet"]).output().unwrap();
    assert_eq!(verdict.status.code(), Some(2));
    let first = String::from_utf8_lossy(&verdict.stderr).lines().next().unwrap().to_owned();
    let parsed: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(parsed["error"]["kind"], "verdict");

    // Missing input file is an input error.
    let missing = bin()
        .args(["gap", "--input", &format!("{}/nope.json", dir.path().display()), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn input_digest_round_trips() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state(dir.path());
    let out = bin().args(["structure", "--input", &spec, "--quiet"]).output().unwrap();
    let r = report(&out);
    let expected = format!("{:x}", Sha256::digest(std::fs::read(&spec).unwrap()));
    assert_eq!(r["input_digest"].as_str().unwrap(), expected);
    assert_eq!(r["schema_version"], "1");
    assert_eq!(r["command"], "structure");
}

fn results_without_timing(out: &Output) -> Value {
    let mut r = report(out);
    r.as_object_mut().unwrap().remove("timing_ms");
    r
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state(dir.path());
    for cmd in [
        vec!["report-all", "--input", &spec, "--seed", "5"],
        vec!["clt", "--input", &spec, "--seed", "5", "--replicates", "200"],
        vec!["simulate", "--input", &spec, "--seed", "5", "--length", "64"],
    ] {
        let mut with_quiet = cmd.clone();
        with_quiet.push("--quiet");
        let a = bin().args(&with_quiet).output().unwrap();
        let b = bin().args(&with_quiet).output().unwrap();
        assert_eq!(a.status.code(), Some(0), "{cmd:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(results_without_timing(&a), results_without_timing(&b), "{cmd:?}");
    }
}

#[test]
fn env_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state(dir.path());
    let flagged = bin()
        .args(["simulate", "--input", &spec, "--seed", "7", "--length", "64", "--quiet"])
        .output()
        .unwrap();
    let via_env = bin()
        .args(["simulate", "--input", &spec, "--seed", "3", "--length", "64", "--quiet"])
        .env("ERGOGRAPH_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(
        results_without_timing(&flagged),
        results_without_timing(&via_env)
    );
}

#[test]
fn vector_argument_grammar() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state(dir.path());
    write(dir.path(), "vecs.json", r#"{"V":[1.0,4.0],"h":[0.0,1.0]}"#);

    // Named rule, inline JSON, and @file all work for --V.
    for v in ["pow2", "[1.0,4.0]", "@vecs.json"] {
        let out = bin()
            .args(["drift", "--input", &spec, "--V", v, "--C", "0", "--quiet"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "--V {v}: {}", String::from_utf8_lossy(&out.stderr));
    }
    // Bad rule name is an input error.
    let bad = bin()
        .args(["drift", "--input", &spec, "--V", "cubic", "--C", "0", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    // Wrong length is an input error.
    let wrong = bin()
        .args(["drift", "--input", &spec, "--V", "[1.0,2.0,3.0]", "--C", "0", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(wrong.status.code(), Some(1));
    // Out-of-range C is an input error.
    let oob = bin()
        .args(["drift", "--input", &spec, "--V", "pow2", "--C", "5", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(oob.status.code(), Some(1));
}

#[test]
fn drift_failure_is_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state(dir.path());
    // V == 1 off a singleton C cannot contract strictly on two states
    // with these rates when delta is pinned too high.
    let out = bin()
        .args([
            "drift", "--input", &spec, "--V", "one", "--C", "0", "--delta", "0.9", "--quiet",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_curves_are_emitted() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state(dir.path());
    let csv_path = dir.path().join("curve.csv");
    let out = bin()
        .args([
            "autocorr",
            "--input",
            &spec,
            "--n-max",
            "10",
            "--csv",
            csv_path.to_str().unwrap(),
            "--quiet",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "n,R,cs_bound");
    assert_eq!(lines.count(), 11);
}

#[test]
fn smallset_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state(dir.path());
    let out = bin()
        .args(["smallset", "--input", &spec, "--C", "0", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["m"], 1);
    assert_eq!(r["results"]["eps"].as_f64().unwrap(), 1.0);
}

#[test]
fn truncation_study_runs_on_family_only() {
    let dir = tempfile::tempdir().unwrap();
    let fam = write(
        dir.path(),
        "bd.json",
        r#"{"kind":"family","family":"birth_death","params":{"p":0.2,"q":0.5},"N":5}"#,
    );
    let out = bin()
        .args(["truncation-study", "--input", &fam, "--n-grid", "10,20", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["results"]["rows"].as_array().unwrap().len(), 2);

    let finite = two_state(dir.path());
    let bad = bin()
        .args(["truncation-study", "--input", &finite, "--quiet"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn report_all_reducible_chain_fails_structure() {
    let dir = tempfile::tempdir().unwrap();
    let red = write(
        dir.path(),
        "reducible.json",
        r#"{"kind":"finite","P":[[1.0,0.0],[0.0,1.0]]}"#,
    );
    let out = bin().args(["report-all", "--input", &red, "--quiet"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    let checks = r["results"]["checks"].as_array().unwrap();
    assert_eq!(checks[0]["check"], "structure");
    assert_eq!(checks[0]["status"], "FAIL");
    assert!(checks[1..].iter().all(|c| c["status"] == "N-A"));
}
