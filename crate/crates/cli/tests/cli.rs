use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csplab"))
        .args(args)
        .env_remove("CSPLAB_BUDGET")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_str(stdout(o).trim()).expect("one JSON object")
}

/// Every JSON report carries the schema tag and its command.
fn check_envelope(v: &Value, command: &str) {
    assert_eq!(v["schema"], "csplab/1");
    assert_eq!(v["command"], command);
    assert!(v["verdict"].is_boolean());
}

#[test]
fn solve_examples() {
    let o = run(&["solve", "--template", "qorder", "--instance", &data("c3.struct")]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "unsatisfiable");

    let o = run(&["solve", "--template", "henson", "--instance", &data("triangle.struct")]);
    assert_eq!(o.status.code(), Some(1));

    let k2 = format!("finite:{}", data("k2.struct"));
    let o = run(&["solve", "--template", &k2, "--instance", &data("k2.struct"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    check_envelope(&v, "solve");
    assert_eq!(v["satisfiable"], true);
    assert_eq!(v["witness"]["type"], "map");
}

#[test]
fn pebble_and_ac_examples() {
    let o = run(&["pebble", "--l", "1", "--k", "2", "--template", "qorder", "--instance", &data("c3.struct")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("Duplicator wins"));

    let paths = format!("finite:{}", data("paths.struct"));
    let o = run(&[
        "pebble", "--l", "1", "--k", "2", "--template", &paths, "--instance", &data("c3.struct"), "--emit-line",
        "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v = json(&o);
    check_envelope(&v, "pebble");
    assert!(v["line_length"].as_u64().unwrap() <= 5);
    assert!(v["transcript"].as_str().unwrap().starts_with("move 0"));

    let k2 = format!("finite:{}", data("k2.struct"));
    let o = run(&["ac", "--template", &k2, "--check-solves"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "AC does not solve");
}

#[test]
fn mmsnp_examples() {
    let o = run(&["mmsnp", "--sentence", &data("tri2part.mmsnp"), "--instance", &data("k6.struct")]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "false");

    let o = run(&["mmsnp", "--sentence", &data("tri2part.mmsnp"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["connected"], serde_json::json!([true, true]));
}

#[test]
fn treewidth_nu_and_consistency() {
    let o = run(&["treewidth", "--instance", &data("c3.struct"), "--emit-formula", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    check_envelope(&v, "treewidth");
    assert_eq!(v["formula"], "∃x1,x2,x3. (E(x1,x2) ∧ E(x2,x3) ∧ E(x3,x1))");

    let o = run(&["treewidth", "--instance", &data("k4.struct"), "--l", "2", "--k", "3"]);
    assert_eq!(o.status.code(), Some(1));

    let k2 = format!("finite:{}", data("k2.struct"));
    let o = run(&["nu", "--template", &k2, "--arity", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 8);

    let o = run(&["consistency", "--template", "qorder", "--instance", &data("c3.struct"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let v = json(&o);
    check_envelope(&v, "consistency");
    assert_eq!(v["accepted"], false);
}

#[test]
fn errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.struct");
    fs::write(&bad, "rel E 2\nE a\n").unwrap();
    let o = run(&["solve", "--template", "qorder", "--instance", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("arity"));

    let o = run(&["solve", "--template", "qorder", "--instance", "/nonexistent", "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    assert_eq!(v["schema"], "csplab/1");
    assert!(v["error"].is_string());

    let o = run(&["solve", "--template", "lattice", "--instance", &data("c3.struct")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn budget_comes_from_the_environment() {
    let k2 = format!("finite:{}", data("k2.struct"));
    let o = Command::new(env!("CARGO_BIN_EXE_csplab"))
        .args(["nu", "--template", &k2])
        .env("CSPLAB_BUDGET", "5")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

fn xcheck_lines(args: &[&str]) -> (Option<i32>, Vec<Value>) {
    let o = run(args);
    let lines = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).expect("line-delimited JSON"))
        .collect();
    (o.status.code(), lines)
}

#[test]
fn xcheck_streams_ordered_records() {
    let (code, lines) = xcheck_lines(&["xcheck", "--template", "qorder", "--max-n", "4", "--format", "json"]);
    assert_eq!(code, Some(0));
    let (summary, records) = lines.split_last().unwrap();
    assert_eq!(records.len(), 3161);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["schema"], "csplab/1");
        assert_eq!(r["record"]["index"], i);
        assert_eq!(r["record"]["accepted"], r["record"]["duplicator_wins"]);
    }
    assert_eq!(summary["summary"]["violations"], serde_json::json!([]));
    assert!(summary["summary"]["obstructions"].as_u64().unwrap() > 0);

    let (code, lines) =
        xcheck_lines(&["xcheck", "--template", "henson", "--corpus", "graphs", "--max-n", "4", "--format", "json"]);
    assert_eq!(code, Some(0));
    assert_eq!(lines.last().unwrap()["summary"]["violations"], serde_json::json!([]));
}

#[test]
fn xcheck_k3_on_k4_is_not_a_violation() {
    let k3 = format!("finite:{}", data("k3.struct"));
    let (code, lines) = xcheck_lines(&["xcheck", "--template", &k3, "--instance", &data("k4.struct"), "--format", "json"]);
    assert_eq!(code, Some(0));
    let record = &lines[0]["record"];
    assert_eq!(record["accepted"], true);
    assert_eq!(record["satisfiable"], false);
    assert_eq!(lines[1]["summary"]["incomplete"], 1);
}

#[test]
fn seeded_tree_corpus_is_reproducible() {
    let args = ["xcheck", "--template", "qorder", "--corpus", "trees", "--max-n", "7", "--seed", "9", "--format", "json"];
    let (code, first) = xcheck_lines(&args);
    let (_, second) = xcheck_lines(&args);
    assert_eq!(code, Some(0));
    assert_eq!(first, second);
    assert_eq!(first.len(), 51);
}
