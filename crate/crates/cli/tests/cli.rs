use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singular-ge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn without_wall_time(out: &Output) -> String {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"wall_time_s\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn solve_example1() {
    let out = run(&["solve", "builtin:example1", "--x", "0,2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&out);
    assert_eq!(rep["status"], "ok");
    let phi = rep["result"]["implicit_solution"]["phi"].as_array().unwrap();
    for c in phi {
        assert!((c.as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-9);
    }
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1.41421356237309"));
}

#[test]
fn reports_are_reproducible() {
    let args = ["check", "builtin:example1", "--h", "1,1", "--samples", "200", "--seed", "3"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(without_wall_time(&a), without_wall_time(&b));
    assert_eq!(report(&a)["seed"], 3);
}

#[test]
fn check_example2() {
    let out = run(&["check", "builtin:example2", "--samples", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&out);
    let text = serde_json::to_string(&rep["result"]).unwrap();
    assert!(text.contains("completely_degenerate"), "{text}");
    let prof = &rep["result"]["degeneracy"];
    assert_eq!(prof["completely_degenerate"], true);
    assert_eq!(prof["order"], 3);
    assert_eq!(rep["result"]["robinson_regular"], false);
}

#[test]
fn hypothesis_failures_exit_2_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rep.json");
    let out = run(&[
        "tangent",
        "builtin:example3",
        "--h",
        "1,0",
        "--report",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let rep: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rep["status"], "hypothesis_failure");
    assert!(rep["error"].is_string());

    let out = run(&["banach", "builtin:example2", "--x=-0.01"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["status"], "hypothesis_failure");
}

#[test]
fn input_errors_exit_1() {
    let out = run(&["solve", "no/such/file.sge", "--x", "1,1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sge");
    fs::write(&bad, "dims 1 1\ncone P\norder 1\nf1 = y1 - x1\n").unwrap();
    let out = run(&["check", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = run(&["solve", "builtin:example1", "--x", "1,2,3"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn builtin_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ex1.sge");
    let out = run(&["builtin", "example1", "-o", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let from_file = run(&["solve", path.to_str().unwrap(), "--x", "2,-2"]);
    let from_builtin = run(&["solve", "builtin:example1", "--x", "2,-2"]);
    assert_eq!(
        report(&from_file)["result"]["implicit_solution"]["phi"],
        report(&from_builtin)["result"]["implicit_solution"]["phi"]
    );
}

#[test]
fn reduce_kkt_and_ncp() {
    let dir = tempfile::tempdir().unwrap();
    let kkt = dir.path().join("kkt.sge");
    let out = run(&["reduce", "kkt", "builtin:example2", "-o", kkt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&kkt).unwrap();
    assert!(text.contains("cone FFPP"), "{text}");
    // the reduced program has the branch y1 = (x/4)^(1/3) on both sides
    let out = run(&["solve", kkt.to_str().unwrap(), "--x=-0.004"]);
    assert_eq!(out.status.code(), Some(0));
    let y1 = report(&out)["result"]["implicit_solution"]["phi"][0].as_f64().unwrap();
    assert!((y1 + 0.1).abs() < 1e-9);

    let ncp = dir.path().join("lcp.txt");
    fs::write(&ncp, "dims 1 2\nf1 = 2*y1 + y2 - x1\nf2 = y1 + 2*y2 - x1\n").unwrap();
    let out_path = dir.path().join("lcp.sge");
    let out = run(&["reduce", "ncp", ncp.to_str().unwrap(), "-o", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("cone PP") && text.contains("order 1"), "{text}");
}

#[test]
fn scaling_study_with_grid_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.txt");
    let out = run(&[
        "solve",
        "builtin:example1",
        "--x-grid",
        "log:1e-4:1e-1:8:0,2",
        "--table",
        table.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&out);
    let exponent = rep["result"]["scaling"]["fitted_exponent"].as_f64().unwrap();
    assert!((exponent - 0.5).abs() < 0.05);
    let rows = fs::read_to_string(&table).unwrap();
    assert!(rows.lines().count() >= 8);
}

#[test]
fn tangent_certificate_for_example3() {
    let out = run(&["tangent", "builtin:example3", "--h", "0,1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&out);
    assert_eq!(rep["result"]["certificate"]["accepted"], true);
}
