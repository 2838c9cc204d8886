//! End-to-end runs of the `localrules` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_localrules");
const STUB: &str = env!("CARGO_BIN_EXE_localrules-stub");

fn moons() -> (PathBuf, PathBuf) {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/moons");
    (root.join("moons.csv"), root.join("moons.schema.json"))
}

fn run(sub: &str, extra: &[&str]) -> Output {
    let (csv, schema) = moons();
    Command::new(BIN)
        .arg(sub)
        .arg("--data")
        .arg(csv)
        .arg("--schema")
        .arg(schema)
        .args(["--trees", "10", "--neighborhood-size", "200"])
        .args(extra)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn explain_text_names_rule_and_counterfactuals() {
    let text = stdout(&run("explain", &[]));
    assert!(text.starts_with("instance #0: {x1 = "), "{text}");
    for needle in ["\nblack box: class = ", "\nrule: {", "\ncounterfactuals:", "\ndiagnostics: fidelity "] {
        assert!(text.contains(needle), "missing {needle:?} in {text}");
    }
}

#[test]
fn explain_structured_is_one_document_per_instance() {
    let text = stdout(&run("explain", &["--format", "structured", "--instances", "3,1"]));
    let docs: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0]["index"], 3);
    assert_eq!(docs[1]["index"], 1);
    for d in &docs {
        let label = d["black_box_label"].as_str().unwrap();
        assert!(label == "purple" || label == "green");
        assert!(d["instance"]["x1"].is_number() && d["instance"]["x2"].is_number());
        assert!(d["rule"]["premise"].is_array());
        assert!(d["rule"]["text"].as_str().unwrap().ends_with(&format!("class = {label}")));
        for q in d["counterfactuals"].as_array().unwrap() {
            assert_ne!(q["rule"]["outcome"].as_str().unwrap(), label);
            assert!(q["nf"].as_u64().unwrap() >= 1);
            assert!(q["changes"].is_object());
        }
        let diag = &d["diagnostics"];
        let f = diag["fidelity"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f));
        assert_eq!(diag["neighborhood"]["size"], 200);
        let counts = &diag["neighborhood"]["class_counts"];
        assert_eq!(counts["purple"].as_u64().unwrap() + counts["green"].as_u64().unwrap(), 200);
    }
}

#[test]
fn json_is_an_alias_for_structured() {
    let a = stdout(&run("explain", &["--format", "json"]));
    let b = stdout(&run("explain", &["--format", "structured"]));
    assert_eq!(a, b);
}

#[test]
fn exit_codes_follow_error_class() {
    assert_eq!(run("explain", &["--no-such-flag"]).status.code(), Some(1));
    let missing = Command::new(BIN)
        .args(["explain", "--data", "/nonexistent.csv", "--schema"])
        .arg(moons().1)
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let bad_schema = Command::new(BIN)
        .arg("explain")
        .arg("--data")
        .arg(moons().0)
        .arg("--schema")
        .arg(moons().0)
        .output()
        .unwrap();
    assert_eq!(bad_schema.status.code(), Some(2));
    assert_eq!(run("explain", &["--instances", "100000"]).status.code(), Some(1));
    assert_eq!(run("explain", &["--blackbox", "cmd:/nonexistent/black-box"]).status.code(), Some(3));
    let (csv, schema) = moons();
    let faulty = format!(
        "cmd:{STUB} --schema {} --data {} --model parity --fault garbage",
        schema.display(),
        csv.display()
    );
    assert_eq!(run("explain", &["--blackbox", &faulty]).status.code(), Some(3));
}

#[test]
fn neighborhood_dump_has_one_row_per_instance() {
    let o = run("neighborhood", &["--instances", "4"]);
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,class,distance"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 200);
    let green = rows.iter().filter(|r| r.split(',').nth(2) == Some("green")).count();
    let stats = String::from_utf8_lossy(&o.stderr);
    assert!(stats.contains(&format!("green {green}")), "{stats}");
}

#[test]
fn neighborhood_rejects_several_instances() {
    assert_eq!(run("neighborhood", &["--instances", "0..3"]).status.code(), Some(1));
}

#[test]
fn evaluate_writes_structured_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = run("evaluate", &["--instances", "0..3", "--output", path.to_str().unwrap()]);
    let table = stdout(&o);
    assert_eq!(table.lines().filter(|l| l.starts_with("lore\t")).count(), 4);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["seed"], 0);
    let m = &report["methods"][0];
    assert_eq!(m["method"], "lore");
    assert_eq!(m["records"].as_array().unwrap().len(), 3);
    assert_eq!(m["summary"]["instances"], 3);
    assert!(m["summary"]["fidelity"]["mean"].as_f64().unwrap() > 0.5);
}

#[test]
fn compare_rows_follow_requested_order() {
    let text = stdout(&run("compare", &["--instances", "0..2", "--methods", "global,rnd,lore"]));
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(methods, ["global", "rnd", "lore"]);
}

#[test]
fn compare_matches_single_method_evaluation() {
    let cmp: Value = serde_json::from_str(&stdout(&run(
        "compare",
        &["--instances", "0..2", "--methods", "crn,lore", "--format", "structured"],
    )))
    .unwrap();
    let single: Value = serde_json::from_str(&stdout(&run(
        "evaluate",
        &["--instances", "0..2", "--method", "lore", "--format", "structured"],
    )))
    .unwrap();
    assert_eq!(cmp["methods"][1], single["methods"][0]);
}

#[test]
fn constant_black_box_is_always_hit() {
    let (csv, schema) = moons();
    let bb = format!(
        "cmd:{STUB} --schema {} --data {} --model constant:green",
        schema.display(),
        csv.display()
    );
    let report: Value = serde_json::from_str(&stdout(&run(
        "evaluate",
        &["--instances", "0..4", "--blackbox", &bb, "--format", "structured"],
    )))
    .unwrap();
    let summary = &report["methods"][0]["summary"];
    assert_eq!(summary["hit"]["mean"], 1.0);
    assert_eq!(summary["fidelity"]["mean"], 1.0);
    assert_eq!(summary["tree_depth"]["mean"], 0.0);
}
