use std::path::Path;
use std::process::Command;

use evtwin_cli::{main_with, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use evtwin_core::config::ScenarioConfig;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("evtwin").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_evtwin");
    let bad = Command::new(bin).args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage:"));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&help.stdout).contains("policy-sweep"));
    let missing = Command::new(bin).args(["run", "--config", "/nonexistent/s.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_USAGE));
}

#[test]
fn run_is_byte_identical_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (code, out, _) = run(&["run", "--seed", "7", "--out", p(&a)]);
    assert_eq!(code, EXIT_OK);
    let record: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(record["seed"], 7);
    assert_eq!(record["schema_version"], 1);
    run(&["run", "--seed", "7", "--out", p(&b)]);
    let read = |d: &Path| std::fs::read(d.join("results.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    run(&["run", "--seed", "7", "--out", p(&a)]);
    assert_eq!(read(&a), read(&b), "a rerun is a no-op");
}

#[test]
fn invalid_scenarios_print_schema_help() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut cfg = serde_json::to_value(ScenarioConfig::campus_baseline()).unwrap();
    cfg["areas"][0]["n_ports_30kW"] = 12.into();
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, _, err) = run(&["run", "--config", p(&path), "--out", p(dir.path())]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("areas[0].n_ports_30kW"));
    assert!(err.contains("A scenario file is a JSON object"));
    let (code, _, _) = run(&["grid", "--space", "7d"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn batch_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let s1 = dir.path().join("one.json");
    let mut cfg = ScenarioConfig::campus_baseline();
    std::fs::write(&s1, cfg.to_json_pretty()).unwrap();
    cfg.nb_electrical = 180;
    let s2 = dir.path().join("two.json");
    std::fs::write(&s2, cfg.to_json_pretty()).unwrap();
    let out = dir.path().join("out");
    let (code, csv, _) = run(&["batch", p(&s1), p(&s2), "--replicates", "3", "--format", "csv", "--out", p(&out)]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("experiment,scenario_hash,seed,label"));
    assert!(lines[1].contains("one.json") && lines[6].contains("two.json"));
    let index: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["experiments"]["batch"], serde_json::json!({ "records": 6, "scenarios": 2, "seeds": 3 }));
}

#[test]
fn policy_sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&["policy-sweep", "--ev", "200", "--cases", "0,5", "--replicates", "6", "--out", p(dir.path())]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("results.jsonl")).unwrap().lines().count(), 12);
    let tests = std::fs::read_to_string(dir.path().join("policy_tests.csv")).unwrap();
    assert!(tests.lines().nth(1).unwrap().starts_with("200,5,0,"));
    let (code, _, _) = run(&["policy-sweep", "--cases", "9", "--out", p(dir.path())]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn optimize_reports_rows_against_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run(&[
        "optimize", "--ev", "150", "--algorithms", "pso,tabu", "--runs", "2", "--format", "csv", "--out", p(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("algorithm,seed,budget"));
    assert!(dir.path().join("optimizer_3d_ev150.csv").exists());
    let (code, _, _) = run(&["optimize", "--algorithms", "annealing", "--out", p(dir.path())]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn stats_subcommands() {
    let (code, out, _) = run(&["stats", "wilcoxon", "--a", "1,-2,3,-4,5", "--b", "0,0,0,0,0", "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().nth(1).unwrap().starts_with("5,5,6,9,6,0.812500000000,Exact"));

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pairs.csv");
    std::fs::write(&input, "a,b\n1.5,1.0\n2.0,2.5\n3.0,1.0\n").unwrap();
    let (code, out, _) = run(&["stats", "wilcoxon", "--input", p(&input), "--alternative", "greater"]);
    assert_eq!(code, EXIT_OK);
    let r: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(r["n_effective"], 3);
    assert_eq!(run(&["stats", "wilcoxon", "--a", "1", "--b", "1"]).0, EXIT_USAGE);

    let (code, out, _) =
        run(&["stats", "sobol", "--model", "ishigami", "--n-base", "4096", "--format", "csv", "--out", p(dir.path())]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("factor,y\nx1,"));
    assert!(dir.path().join("sobol_ishigami.csv").exists());
    assert_eq!(run(&["stats", "sobol", "--model", "ishigami", "--n-base", "100"]).0, EXIT_USAGE);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["grid", "--space", "5d", "--cap", "100", "--out", p(dir.path())]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("6720"));
}
