use std::path::PathBuf;
use std::process::{Command, Output};

use fh_lab::{accept_field, run_suite, HarnessError, Rejection, SuiteConfig};
use fh_workbench::par::Exec;

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &PathBuf, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab")).args(args).output().expect("lab runs")
}

fn arg(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = scratch("determinism");
    let cfg = write_config(&dir, r#"{"m":[-2,0],"samples":{"tree":40,"folding":10,"quotient":20}}"#);
    let run = |out: &str| {
        let path = dir.join(out);
        let o = lab(&[
            "run", "--config", arg(&cfg), "--suite", "tree", "--suite", "folding", "--suite", "quotient",
            "--seed", "7", "--json", arg(&path),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(path).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["seed"], 7);
    let names: Vec<&str> = report["suites"].as_array().unwrap().iter().map(|s| s["suite"].as_str().unwrap()).collect();
    assert_eq!(names, ["folding", "quotient", "tree"]);
}

#[test]
fn sequential_flag_does_not_change_the_report() {
    let dir = scratch("sequential");
    let cfg = write_config(&dir, r#"{"m":[-2],"samples":{"tree":40}}"#);
    let out = |extra: &[&str], name: &str| {
        let path = dir.join(name);
        let mut args = vec!["run", "--config", arg(&cfg), "--suite", "tree", "--suite", "periodic", "--json", arg(&path)];
        args.extend_from_slice(extra);
        assert_eq!(lab(&args).status.code(), Some(0));
        std::fs::read(path).unwrap()
    };
    assert_eq!(out(&[], "par.json"), out(&["--sequential"], "seq.json"));
}

#[test]
fn reducible_polynomial_is_rejected_with_exit_two() {
    let dir = scratch("reducible");
    let cfg = write_config(&dir, r#"{"m":[-4,0]}"#);
    let o = lab(&["run", "--config", arg(&cfg), "--suite", "tree"]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("NotIrreducible"), "{stderr}");
    match accept_field(&[-4, 0]) {
        Err(HarnessError::FieldRejected { criterion, .. }) => assert_eq!(criterion, Rejection::NotIrreducible),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_config_is_an_error() {
    let dir = scratch("malformed");
    let cfg = write_config(&dir, r#"{"m":[-2],"typo":1}"#);
    assert_eq!(lab(&["run", "--config", arg(&cfg)]).status.code(), Some(2));
    let cfg = write_config(&dir, r#"{"m":[-2],"suites":["nope"]}"#);
    assert_eq!(lab(&["run", "--config", arg(&cfg)]).status.code(), Some(2));
    assert_eq!(lab(&["run", "--config", arg(&dir.join("missing.json"))]).status.code(), Some(2));
}

fn dot_for(dir: &PathBuf, radius: &str) -> String {
    let cfg = dir.join("config.json");
    let dot = dir.join(format!("r{radius}.dot"));
    let o = lab(&["tree", "--config", arg(&cfg), "--radius", radius, "--dot", arg(&dot)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(dot).unwrap()
}

#[test]
fn dot_export_has_the_ball_of_the_requested_radius() {
    let dir = scratch("dot2");
    write_config(&dir, r#"{"m":[-2]}"#);
    let two = dot_for(&dir, "2");
    assert!(two.starts_with("digraph"));
    assert_eq!(two.matches("[label=").count(), 9);
    assert_eq!(two.matches("->").count(), 8);
    assert!(two.contains("\"(0|0)\""));
    let zero = dot_for(&dir, "0");
    assert_eq!(zero.matches("[label=").count(), 1);
    assert_eq!(zero.matches("->").count(), 0);

    let dir = scratch("dot6");
    write_config(&dir, r#"{"m":[-6,0]}"#);
    let one = dot_for(&dir, "1");
    assert_eq!(one.matches("[label=").count(), 8);
    assert_eq!(one.matches("->").count(), 7);
}

#[test]
fn dot_export_over_budget_is_refused() {
    let dir = scratch("budget");
    let cfg = write_config(&dir, r#"{"m":[-2],"budgets":{"export_radius":3}}"#);
    let dot = dir.join("big.dot");
    let o = lab(&["tree", "--config", arg(&cfg), "--radius", "4", "--dot", arg(&dot)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dot.exists());
    let cfg = SuiteConfig::load(&cfg).unwrap();
    assert!(matches!(fh_lab::export_tree(&cfg, 4), Err(HarnessError::BudgetExceeded { radius: 4, budget: 3 })));
}

#[test]
fn periodic_table_is_written_as_csv() {
    let dir = scratch("periodic");
    let cfg = write_config(&dir, r#"{"m":[-2,0]}"#);
    let csv = dir.join("p.csv");
    let o = lab(&["periodic", "--config", arg(&cfg), "--max-m", "3", "--csv", arg(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "m,lattice_solutions,total");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("2,1,"), "{text}");
}

#[test]
fn failing_check_gives_exit_one() {
    let dir = scratch("failing");
    let cfg = write_config(&dir, r#"{"m":[-2],"samples":{"metric":10},"tolerances":{"vanishing_threshold":0}}"#);
    let json = dir.join("report.json");
    let o = lab(&["run", "--config", arg(&cfg), "--suite", "metric", "--json", arg(&json)]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
    let checks = report["suites"][0]["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["pass"] == false));
    assert!(checks.iter().any(|c| c["pass"] == true));
}

#[test]
fn library_run_matches_the_requested_suites() {
    let mut cfg = SuiteConfig::for_field(vec![2, -4]);
    cfg.suites = vec!["periodic".parse().unwrap()];
    let report = run_suite(&cfg, Exec::Sequential).unwrap();
    assert!(report.pass);
    assert_eq!(report.degree, 2);
    assert_eq!(report.suites.len(), 1);
}
