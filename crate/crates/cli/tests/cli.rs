use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_invmetrics"));
    c.env_clear();
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", stdout(o)))
}

fn without_footer(text: &str) -> String {
    if text.trim_start().starts_with('{') {
        let mut v: Value = serde_json::from_str(text).unwrap();
        v.as_object_mut().unwrap().remove("footer");
        v.to_string()
    } else {
        text.lines().filter(|l| !l.starts_with("# footer")).collect::<Vec<_>>().join("\n")
    }
}

#[test]
fn kobayashi_at_ball_centre() {
    let o = run(&[
        "compute",
        "--domain",
        "ball:r=1,n=2",
        "--metrics",
        "kobayashi",
        "--seed",
        "1",
        "--point",
        "0,0",
        "--set",
        "assert.expect_value=kobayashi,0.99,1.01",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["command"], "compute");
    let k = v["result"]["rows"][0]["values"][0].as_f64().unwrap();
    assert!((k - 1.0).abs() < 0.01, "{k}");
    assert_eq!(v["assertions"][0]["passed"], true);
}

#[test]
fn punctured_disk_values() {
    let o = run(&["compute", "--domain", "punctured_disk", "--metrics", "poincare,bergman", "--seed", "5", "--samples", "8", "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "index,point,direction,poincare,bergman");
    assert_eq!(rows.len(), 9);
    for r in &rows[1..] {
        let cells: Vec<&str> = r.split(',').collect();
        let p: f64 = cells[3].parse().unwrap();
        let b: f64 = cells[4].parse().unwrap();
        assert!(p > 0.0 && b > 0.0);
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["compute", "--domain", "disk", "--metrics", "", "--seed", "1"])), 2);
    assert_eq!(code(&run(&["compute", "--domain", "disk", "--metrics", "poincare"])), 2);
    assert_eq!(code(&run(&["compare", "--domain", "disk", "--metrics", "poincare", "--seed", "1"])), 2);
    assert_eq!(code(&run(&["compute", "--domain", "nowhere", "--metrics", "poincare", "--seed", "1"])), 2);
    assert_eq!(code(&run(&["compute", "--domain", "disk", "--metrics", "poincare", "--seed", "1", "--set", "run.bogus=1"])), 2);
    assert_eq!(code(&run(&["compute", "--domain", "disk", "--metrics", "poincare", "--seed", "1", "--point", "0.1,0.2"])), 2);
}

#[test]
fn config_errors_carry_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ini");
    std::fs::write(&path, "[run]\ndomain = disk\nsede = 3\n").unwrap();
    let o = run(&["--config", path.to_str().unwrap(), "compute"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.ini:3:1"), "{err}");
}

#[test]
fn flags_override_environment_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ini");
    std::fs::write(&path, "[run]\ndomain = ball:r=2\nmetrics = poincare\nseed = 1\npoint = 0\n").unwrap();
    let cfg = path.to_str().unwrap();
    let value = |o: &Output| json(o)["result"]["rows"][0]["values"][0].as_f64().unwrap();
    let from_file = run(&["--config", cfg, "compute"]);
    let from_env = bin().args(["--config", cfg, "compute"]).env("INVMETRICS_DOMAIN", "disk").output().unwrap();
    let from_flag =
        bin().args(["--config", cfg, "compute", "--domain", "ball:r=4"]).env("INVMETRICS_DOMAIN", "disk").output().unwrap();
    // g_P(1, 1) at the centre of a disk of radius r is 2/r².
    assert!((value(&from_file) - 0.5).abs() < 1e-12);
    assert!((value(&from_env) - 2.0).abs() < 1e-12);
    assert!((value(&from_flag) - 0.125).abs() < 1e-12);
    let bad_env = bin().args(["--config", cfg, "compute"]).env("INVMETRICS_NOPE", "1").output().unwrap();
    assert_eq!(code(&bad_env), 2);
}

#[test]
fn disk_comparison_bands() {
    let o = run(&[
        "compare",
        "--domain",
        "disk",
        "--metrics",
        "poincare,bergman(degree=40)",
        "--seed",
        "3",
        "--samples",
        "16",
        "--set",
        "assert.expect_ratio_band=poincare,bergman,0.9999,1.0001",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let pair = &v["result"]["pairs"][0];
    assert_eq!(pair["first"], "poincare");
    assert_eq!(pair["second"], "bergman");
    assert_eq!(pair["semantics"], "hermitian");
    assert!((pair["inf_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-4);
    assert!((pair["sup_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-4);
}

#[test]
fn failed_assertion_exits_one() {
    let o = run(&[
        "compare",
        "--domain",
        "disk",
        "--metrics",
        "poincare,euclidean",
        "--seed",
        "3",
        "--samples",
        "8",
        "--set",
        "assert.expect_ratio_band=poincare,euclidean,0.9,1.1",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ratio_band euclidean/poincare"));
}

#[test]
fn einstein_flow_window() {
    let o = run(&["flow", "--seed", "0", "--start", "poincare", "--t-max", "0.05", "--dt", "1e-3", "--set", "assert.expect_window=-1.000001,-0.8333"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let w = &v["result"]["window"];
    assert!((w[0].as_f64().unwrap() + 1.0).abs() < 1e-9);
    assert!((w[1].as_f64().unwrap() + 1.0 / 1.2).abs() < 1e-9);
    assert_eq!(v["result"]["pinching_held"], true);
}

#[test]
fn flat_flow_window() {
    let o = run(&["flow", "--seed", "0", "--start", "flat", "--nodes", "17", "--t-max", "1e-3", "--dt", "1e-5", "--set", "assert.expect_window=0,0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unstable_flow_step_is_numerical() {
    let o = run(&["flow", "--seed", "0", "--start", "poincare", "--t-max", "0.1", "--dt", "0.05"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

fn write_run(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name).to_str().unwrap().to_string();
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--output", path.as_str()]);
    run(&all);
    path
}

#[test]
fn report_passes_trips_and_detects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["compare", "--domain", "disk", "--metrics", "poincare,bergman(degree=40)", "--seed", "3", "--samples", "8"];
    let good_band = "assert.expect_ratio_band=poincare,bergman,0.9999,1.0001";
    let mut a: Vec<&str> = base.to_vec();
    a.extend(["--set", good_band]);
    let json_path = write_run(dir.path(), "a.json", &a);
    let mut csv: Vec<&str> = a.clone();
    csv.extend(["--format", "csv"]);
    let csv_path = write_run(dir.path(), "a.csv", &csv);

    // JSON and CSV dumps of one configuration share a hash.
    let o = run(&["report", &json_path, &csv_path]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS ratio_band bergman/poincare"));

    // A tripwire assertion fails and the report names it.
    let mut b: Vec<&str> = base.to_vec();
    b.extend(["--set", "assert.expect_sup_above=poincare,bergman,2"]);
    let trip = write_run(dir.path(), "b.json", &b);
    let o = run(&["report", &trip]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sup_above bergman/poincare"));

    let o = run(&["report", &json_path, &trip]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("provenance mismatch"));

    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{\"format\": 3}").unwrap();
    assert_eq!(code(&run(&["report", junk.to_str().unwrap()])), 2);
}

#[test]
fn output_is_deterministic_apart_from_footer() {
    for format in ["json", "csv"] {
        let args = ["compare", "--domain", "polydisk:1,1", "--metrics", "poincare,bergman", "--seed", "11", "--samples", "6", "--format", format];
        let a = stdout(&run(&args));
        let b = stdout(&run(&args));
        assert!(!a.is_empty());
        assert_eq!(without_footer(&a), without_footer(&b));
        let last = a.trim_end().lines().last().unwrap();
        assert!(last.starts_with("# footer") || last == "}", "{last}");
    }
}
