use std::path::PathBuf;
use std::process::{Command, Output};

use fraisse_core::class::JepWitness;
use fraisse_core::io::class_spec_from_json;
use fraisse_core::limit::Chain;
use fraisse_core::{PartialIso, Verdict, WapWitness};
use serde_json::Value;

fn specs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn spec(name: &str) -> String {
    specs().join(format!("{name}.spec")).display().to_string()
}

fn fraisse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraisse"))
        .args(args)
        .env_remove("FRAISSE_BUDGET")
        .output()
        .expect("the binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("the report is JSON")
}

#[test]
fn wap_on_graph_pairs_gives_the_identity_witness() {
    let graphs = spec("graphs");
    let out = fraisse(&["wap", "--spec", &graphs, "--size", "2", "--bounds", "2,4,8"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["bounds"]["amalgam"], 8);
    let results = r["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    let spec = class_spec_from_json(&std::fs::read_to_string(&graphs).unwrap()).unwrap();
    for item in results {
        let v: Verdict<WapWitness> = serde_json::from_value(item["result"].clone()).unwrap();
        let w = v.into_witness().unwrap();
        assert!(w.is_trivial());
        assert!(spec.check_wap_witness(&w));
    }
}

#[test]
fn split_jep_fails_up_to_five() {
    let s = specs().join("structures");
    let out = fraisse(&[
        "jep",
        "--spec",
        &spec("split"),
        "--a",
        s.join("allP1.json").to_str().unwrap(),
        "--b",
        s.join("allNotP1.json").to_str().unwrap(),
        "--bound",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v: Verdict<JepWitness> = serde_json::from_value(report(&out)["result"].clone()).unwrap();
    assert_eq!(v.none_up_to(), Some(5));
}

#[test]
fn seeds_of_the_graph_limit_agree_at_depth_six() {
    let out = fraisse(&[
        "compare",
        "--spec",
        &spec("graphs"),
        "--seed-a",
        "0",
        "--seed-b",
        "1",
        "--depth",
        "6",
        "--steps",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let iso: PartialIso =
        serde_json::from_value(report(&out)["result"]["success"].clone()).unwrap();
    for x in 0..=6 {
        assert!(iso.pairs.contains_key(&x));
        assert!(iso.pairs.values().any(|&y| y == x));
    }
}

#[test]
fn check_reports_spec_shape_and_counts() {
    let out = fraisse(&[
        "check",
        "--spec",
        &spec("graphs"),
        "--types",
        "4",
        "--audit",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["relations"], 1);
    assert_eq!(r["forbidden"], 0);
    assert_eq!(r["type_counts"], serde_json::json!([1, 1, 2, 4, 11]));
    let tf = report(&fraisse(&["check", "--spec", &spec("triangle-free")]));
    assert_eq!(tf["forbidden"], 1);
}

#[test]
fn membership_sets_the_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let k3 = dir.path().join("k3.json");
    std::fs::write(
        &k3,
        r#"{"universe":[0,1,2],"relations":{"E":[[0,1],[1,2],[0,2]]}}"#,
    )
    .unwrap();
    let k3 = k3.to_str().unwrap();
    assert_eq!(
        fraisse(&["check", "--spec", &spec("graphs"), "--structure", k3])
            .status
            .code(),
        Some(0)
    );
    let out = fraisse(&["check", "--spec", &spec("triangle-free"), "--structure", k3]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["member"], false);
}

#[test]
fn malformed_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.spec");
    std::fs::write(
        &bad,
        r#"{"label":"bad","signature":[{"name":"E","arity":2}],
            "forbidden":[{"universe":[0,1,2],"relations":{"E":[[0,1,2]]}}]}"#,
    )
    .unwrap();
    let out = fraisse(&["check", "--spec", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("arity"));
    assert_eq!(
        fraisse(&["wap", "--spec", &spec("graphs")]).status.code(),
        Some(2)
    );
    assert_eq!(
        fraisse(&[
            "wap",
            "--spec",
            &spec("graphs"),
            "--size",
            "1",
            "--bounds",
            "1,2"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(fraisse(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn build_log_replays_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("chain.jsonl");
    let rep = dir.path().join("report.json");
    let out = fraisse(&[
        "build-limit",
        "--spec",
        &spec("graphs"),
        "--steps",
        "60",
        "--seed",
        "3",
        "--log",
        log.to_str().unwrap(),
        "--report",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r["budget"]["extension_bound"], 7);
    let entries =
        Chain::read_log(std::io::BufReader::new(std::fs::File::open(&log).unwrap())).unwrap();
    assert_eq!(r["log"].as_array().unwrap().len(), entries.len());
    let v = fraisse(&[
        "verify",
        "--spec",
        &spec("graphs"),
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(report(&v)["valid"], true);
}

#[test]
fn budget_comes_from_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_fraisse"))
        .args(["build-limit", "--spec", &spec("sets"), "--steps", "30"])
        .env("FRAISSE_BUDGET", r#"{"extension_bound": 2}"#)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["budget"]["extension_bound"], 2);
    assert_eq!(r["budget"]["amalgam_bound"], 8);
    let bad = Command::new(env!("CARGO_BIN_EXE_fraisse"))
        .args(["build-limit", "--spec", &spec("sets"), "--steps", "30"])
        .env("FRAISSE_BUDGET", r#"{"no_such_field": 1}"#)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn generic_orders_move_points_and_agree_across_seeds() {
    let out = Command::new(env!("CARGO_BIN_EXE_fraisse"))
        .args([
            "generic-aut",
            "--spec",
            &spec("linear-orders"),
            "--steps",
            "120",
            "--compare-seed",
            "1",
            "--depth",
            "3",
        ])
        .env("FRAISSE_BUDGET", r#"{"extension_bound": 3}"#)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["total_prefix"].as_u64().unwrap() >= 3);
    assert!(r["compare"]["result"]["success"].is_object());
    let map = r["map"].as_array().unwrap();
    assert!(map.iter().any(|p| p[0] != p[1]));
}

#[test]
fn distance_between_prefixes() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let n = dir.path().join("n.json");
    std::fs::write(
        &m,
        r#"{"universe":[0,1,2,3],"relations":{"E":[[0,1],[2,3]]}}"#,
    )
    .unwrap();
    std::fs::write(&n, r#"{"universe":[0,1,2,3],"relations":{"E":[[0,1]]}}"#).unwrap();
    let out = fraisse(&[
        "distance",
        "--spec",
        &spec("graphs"),
        "--m",
        m.to_str().unwrap(),
        "--n",
        n.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["distance"]["exponent"], 3);
    assert_eq!(r["value"], 0.125);
}

#[test]
fn dot_export_needs_one_binary_relation() {
    let out = fraisse(&["export", "--spec", &spec("graphs"), "--steps", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("graph \"graphs\" {"));
    let split = fraisse(&["export", "--spec", &spec("split"), "--steps", "4"]);
    assert_eq!(split.status.code(), Some(2));
}

#[test]
fn probe_finds_extensions_over_a_fixed_pair() {
    let out = fraisse(&[
        "probe",
        "--spec",
        &spec("graphs"),
        "--steps",
        "100",
        "--pivot",
        "0,1,2",
        "--fixed",
        "0,1",
        "--extension-bound",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["checked"], 8);
}
