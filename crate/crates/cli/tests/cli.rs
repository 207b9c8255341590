use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perflat")).args(args).arg("-q").output().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn evaluate_glr_coin2() {
    let o = run(&["evaluate", "--measure", &data("glr.json"), "--space", &data("coin2.json"), "--var", &data("x.json"), "--t", "0"]);
    assert!(o.status.success());
    assert_eq!(json(&o)["results"][0]["values"]["0:0"], 2.0);
}

#[test]
fn induce_glr_coin2() {
    let o = run(&["induce", "--z", "2", "--measure", &data("glr.json"), "--space", &data("coin2.json"), "--var", &data("x.json")]);
    assert!(o.status.success());
    assert_eq!(json(&o)["result"]["rho"][0], 0.0);
}

#[test]
fn bad_space_exits_1_naming_the_invariant() {
    let o = run(&["validate-space", &data("bad_space.json")]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "InvalidSpace");
    assert!(err["error"]["message"].as_str().unwrap().contains("sum to 0.9"));
    assert!(run(&["validate-space", &data("coin2.json")]).status.success());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["evaluate", "--measure", &data("glr.json")]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let o = run(&["induce", "--z", "2", "--measure", &data("glr.json"), "--space", &data("coin2.json"), "--var", &data("x.json"), "--tol-c", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["curve", "--measure", &data("glr.json"), "--space", &data("coin2.json"), "--var", &data("x.json"), "--z-min", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    std::fs::write(&p, "{\"kind\": \"glr\",\n \"params\": [}").unwrap();
    let o = run(&["evaluate", "--measure", p.to_str().unwrap(), "--space", &data("coin2.json"), "--var", &data("x.json")]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("line 2"), "{err}");
    std::fs::write(&p, r#"{"space": "coin2", "values": {"h": 1, "x": 2}}"#).unwrap();
    let o = run(&["evaluate", "--measure", &data("glr.json"), "--space", &data("coin2.json"), "--var", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown leaf id"));
}

#[test]
fn curve_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let o = run(&[
        "curve", "--measure", &data("glr.json"), "--space", &data("coin2.json"), "--var", &data("x.json"),
        "--z-list", "1,2,3", "--csv", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["curve"]["monotone"], true);
    assert_eq!(v["curve"]["rho"][1][0], 0.0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("atom_id,z,rho\n0:0,1.0,"));
    assert_eq!(text.lines().count(), 4);
    let o = run(&[
        "curve", "--measure", &data("exp1.json"), "--space", &data("coin2.json"), "--var", &data("x.json"),
        "--z-min", "-2", "--z-max", "0.5", "--z-steps", "5", "--family", "entropic",
    ]);
    assert!(o.status.success());
}

#[test]
fn reconstruct_and_dual() {
    let o = run(&["reconstruct", "--measure", &data("glr.json"), "--space", &data("coin2.json"), "--var", &data("x.json")]);
    let v = json(&o);
    assert!((v["reconstructed"]["0:0"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!(v["max_abs_error"].as_f64().unwrap() < 1e-6);
    let o = run(&["dual", "--space", &data("coin2.json"), "--var", &data("x.json"), "--z", "2"]);
    let v = json(&o);
    assert!(v["result"]["rho"][0].as_f64().unwrap().abs() < 1e-9);
    assert!(v["max_gap"].as_f64().unwrap() < 1e-6);
}

#[test]
fn check_axioms_records_seed() {
    let o = run(&["check-axioms", "--measure", &data("exp1.json"), "--space", &data("coin2.json"), "--trials", "50", "--seed", "4"]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["seed"], 4);
    for r in v["reports"].as_array().unwrap() {
        assert!(r["axioms"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
        assert_eq!(r["scale_invariance"]["passed"], false);
    }
}

#[test]
fn consistency_is_deterministic_and_exports_witness() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    let args = [
        "check-consistency", "--measure", &data("lpm2.json"), "--space", &data("binomial2.json"), "--z-grid", "0.5,1,2",
        "--trials", "50", "--seed", "7", "--search-budget", "20000", "--witness-out", w.to_str().unwrap(),
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["verdict"], "counterexample");
    let x: Value = serde_json::from_str(&std::fs::read_to_string(&w).unwrap()).unwrap();
    assert_eq!(x["space"], "binomial2");
    assert_eq!(x["values"].as_object().unwrap().len(), 4);
    let o = run(&["check-consistency", "--measure", &data("glr.json"), "--space", &data("binomial2.json"), "--z-grid", "0.5,1,2", "--trials", "100"]);
    assert_eq!(json(&o)["verdict"], "consistent_on_sample");
}

#[test]
fn thread_count_does_not_change_output() {
    let args = ["check-consistency", "--measure", &data("lpm2.json"), "--space", &data("binomial2.json"), "--z-grid", "1", "--trials", "40", "--search-budget", "4000"];
    let one = Command::new(env!("CARGO_BIN_EXE_perflat")).args(args).env("PERFLAT_THREADS", "1").output().unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_perflat")).args(args).env("PERFLAT_THREADS", "4").output().unwrap();
    assert_eq!(one.stdout, four.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_perflat")).args(args).env("PERFLAT_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn lift_commands() {
    let o = run(&[
        "lift", "--space", &data("binomial2.json"), "--measure", &data("glr.json"), "--dividend", &data("dividend.json"),
        "--t", "1", "--axioms", "--trials", "60",
    ]);
    assert!(o.status.success());
    let v = json(&o);
    assert!(v["value"]["values"]["1:1"].as_str() == Some("inf"));
    assert!(v["axioms"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    let o = run(&["lift", "--space", &data("binomial2.json"), "--measure", &data("glr.json")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn paper_demo_matches_fixtures() {
    let o = run(&["paper-demo"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v = json(&o);
    assert_eq!(v["passed"], true);
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.json");
    std::fs::write(&f, r#"{"glr_coin2": 3}"#).unwrap();
    let o = run(&["paper-demo", "--fixtures", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(json(&o)["mismatches"][0].as_str().unwrap().starts_with("$.glr_coin2: expected 3"));
}
