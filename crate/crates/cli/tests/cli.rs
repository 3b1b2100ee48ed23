use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use selftest_cli::demo::{from_csv, ChshRow, HardyRow};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selftest"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn load(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(doc: &Path, schema: &str) {
    let schema = load(&schema_dir().join(format!("{schema}.json")));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let instance = load(doc);
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", doc.display());
}

const SAMPLE_COEFFS: &str = "1/6,1/8,1/6,1/6,1/8,1/4";

#[test]
fn protocol_reproduces_the_six_level_tree() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["protocol", "--coeffs", SAMPLE_COEFFS, "--out", "p.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("edges: (0,1) (0,4) (0,5) (1,2) (1,3)"), "{}", stdout(&o));
    assert_valid(&dir.path().join("p.json"), "protocol.v1");
}

#[test]
fn protocol_single_edge_and_maximally_entangled() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["protocol", "--coeffs", "0.8,0.6"]);
    assert_eq!(code(&o), 0);
    let w = untrusted_selftest::hardy::w_of_theta((0.6f64 / 0.8).atan()).unwrap();
    assert!(stdout(&o).contains("edges: (0,1)\n"));
    assert!(stdout(&o).contains(&format!("{w:.12}")), "{}", stdout(&o));
    let o = run(dir.path(), &["protocol", "--coeffs", "1,1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("all Schmidt coefficients are equal"));
}

#[test]
fn canonical_qudit_device_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["protocol", "--coeffs", SAMPLE_COEFFS, "--out", "p.json"])), 0);
    let o = run(d, &["simulate", "--protocol", "p.json", "--realization-out", "r.json", "--behavior-out", "b.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_valid(&d.join("r.json"), "realization.v1");
    assert_valid(&d.join("b.json"), "behavior.v1");
    let o = run(d, &["verify", "--realization", "r.json", "--protocol", "p.json", "--out", "rep.json"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).starts_with("PASS"));
    assert_valid(&d.join("rep.json"), "report.v1");
}

#[test]
fn wrong_qubit_test_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["simulate", "--hardy", "0.3", "--realization-out", "r.json"])), 0);
    assert_eq!(code(&run(d, &["verify", "--realization", "r.json", "--w", "0.3"])), 0);
    let o = run(d, &["verify", "--realization", "r.json", "--w", "0.5", "--out", "rep.json"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).starts_with("FAIL"));
    assert_eq!(load(&d.join("rep.json"))["report"]["pass"], Value::Bool(false));
}

#[test]
fn chsh_bound_is_tsirelson() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bound", "--expr", "chsh", "--level", "1", "--out", "sdp.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "0.70710678");
    assert_valid(&dir.path().join("sdp.json"), "sdp.v1");
    // the written problem replays to the same bound
    let o = run(dir.path(), &["bound", "--spec", "sdp.json"]);
    assert_eq!(stdout(&o).trim(), "0.70710678");
}

fn write_pr_box(path: &Path) {
    let slices: Vec<Value> = (0..2)
        .flat_map(|s| (0..2).map(move |t| (s, t)))
        .map(|(s, t)| {
            let table: Vec<Vec<f64>> =
                (0..2).map(|a| (0..2).map(|b| if (a ^ b) == s * t { 0.125 } else { 0.0 }).collect()).collect();
            serde_json::json!({ "s": s, "t": t, "x": s, "y": t, "table": table })
        })
        .collect();
    let doc = serde_json::json!({
        "schema": "observed.v1",
        "shape": { "nS": 2, "nT": 2, "nX": 2, "nY": 2, "nA": 2, "nB": 2 },
        "slices": slices,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
}

#[test]
fn pr_box_membership_is_refuted_with_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_pr_box(&d.join("pr.json"));
    assert_valid(&d.join("pr.json"), "observed.v1");
    let o = run(d, &["membership", "--observed", "pr.json", "--level", "1", "--l", "0.1", "--u", "0.4", "--out", "m.json"]);
    assert_eq!(code(&o), 1, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).starts_with("infeasible"));
    assert_valid(&d.join("m.json"), "membership.v1");
    let m = load(&d.join("m.json"));
    assert_eq!(m["membership"]["result"], "infeasible");
    assert!(m["membership"]["certificate"]["value"].as_f64().unwrap() <= -1e-9);
}

#[test]
fn quantum_membership_is_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["simulate", "--hardy", "0.2", "--untrusted", "--behavior-out", "b.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(d, &["membership", "--observed", "b.json", "--l", "0.2", "--u", "0.3", "--out", "m.json"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert_eq!(load(&d.join("m.json"))["membership"]["result"], "feasible");
}

#[test]
fn schema_violations_report_json_pointers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["simulate", "--chsh-counterexample", "--realization-out", "r.json"])), 0);
    let mut v = load(&d.join("r.json"));
    v["alice"][1]["effects"][0]["im"] = Value::String("oops".into());
    std::fs::write(d.join("bad.json"), v.to_string()).unwrap();
    let o = run(d, &["verify", "--realization", "bad.json", "--w", "0.1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("\"/alice/1/effects/0/im\""), "{}", stderr(&o));

    let mut v = load(&d.join("r.json"));
    v["weights"] = serde_json::json!([0.5, 0.5, 0.5]);
    std::fs::write(d.join("bad.json"), v.to_string()).unwrap();
    let o = run(d, &["simulate", "--realization", "bad.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("\"/weights\""), "{}", stderr(&o));

    std::fs::write(d.join("wrong.json"), r#"{"schema": "behavior.v1"}"#).unwrap();
    let o = run(d, &["verify", "--realization", "wrong.json", "--w", "0.1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("\"/schema\""));
}

#[test]
fn option_ranges_are_checked_before_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["bound", "--expr", "hardy", "--w", "1.5"][..],
        &["bound", "--expr", "chsh", "--level", "4"],
        &["bound", "--expr", "chsh", "--sources", "untrusted", "--l", "0.3", "--u", "0.2"],
        &["bound", "--expr", "chsh", "--l", "0.3"],
        &["simulate", "--hardy", "-0.25"],
        &["demo", "hardy-selftest", "--w", "1"],
        &["nonsense"],
    ] {
        let o = run(d, args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn outputs_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a.json", "b.json"] {
        let o = run(d, &["simulate", "--random", "--seed", "5", "--dims", "2,3", "--realization-out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read(d.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.json")).unwrap());
    assert_valid(&d.join("a.json"), "realization.v1");
    let o = run(d, &["simulate", "--realization", "a.json", "--realization-out", "c.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(a, std::fs::read(d.join("c.json")).unwrap());
}

#[test]
fn chsh_demo_rows_and_thread_independence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let one = bin().current_dir(d).env("SELFTEST_NUM_THREADS", "1").args(["demo", "chsh-counterexample"]).output().unwrap();
    let four = bin().current_dir(d).env("SELFTEST_NUM_THREADS", "4").args(["demo", "chsh-counterexample"]).output().unwrap();
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(one.stdout, four.stdout);
    let rows: Vec<ChshRow> = from_csv(&stdout(&one)).unwrap();
    assert_eq!(rows.len(), 13);
    let mid = &rows[6];
    assert_eq!(mid.alpha, std::f64::consts::FRAC_PI_4);
    assert_eq!(format!("{:.8}", mid.chsh_value), "0.70710678");
    assert!((mid.l - 0.25).abs() < 1e-12 && (mid.u - 0.25).abs() < 1e-12);
    for r in rows.iter().filter(|r| r.alpha != mid.alpha) {
        assert!(r.l < 0.25 && r.u > 0.25 && r.trace_distance > 0.0, "{r:?}");
    }
    let o = run(d, &["demo", "chsh-counterexample", "--format", "json", "--points", "3", "--out", "demo.json"]);
    assert_eq!(code(&o), 0);
    assert_valid(&d.join("demo.json"), "demo.v1");
    let bad = bin().current_dir(d).env("SELFTEST_NUM_THREADS", "zero").args(["demo", "chsh-counterexample"]).output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn hardy_demo_exit_code_follows_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["demo", "hardy-selftest", "--w", "0.25,0.75"]);
    let rows: Vec<HardyRow> = from_csv(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].pass && rows[0].seesaw >= rows[0].q_formula - 1e-6);
    // the second level of the relaxation is not tight near w = 1
    assert!(!rows[1].pass && rows[1].sdp_bound > rows[1].q_formula + 1e-4);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert_eq!(code(&run(dir.path(), &["demo", "hardy-selftest", "--w", "0.25", "--level", "3"])), 0);
}
