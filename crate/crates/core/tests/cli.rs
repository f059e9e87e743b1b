use std::fs;
use std::path::Path;

use asyncpd::cli::{main_with, run, trace_file_name, Cli};
use clap::Parser;

fn exec(args: &[&str]) -> (i32, String) {
    let cli = Cli::try_parse_from(std::iter::once("asyncpd").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    let code = run(cli, &mut out).unwrap();
    (code, String::from_utf8(out).unwrap())
}

fn code(args: &[&str]) -> i32 {
    main_with(std::iter::once("asyncpd").chain(args.iter().copied()))
}

#[test]
fn flow_run_then_bounds_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (c, text) = exec(&["flow", "--alpha", "0.1", "--seed", "1", "--out", out]);
    assert_eq!(c, 0, "{text}");
    assert!(text.contains("converged=true"));
    let trace = dir.path().join(trace_file_name(0.1, 0.1));
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("t,")));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let reports = dir.path().join("reports");
    let (c, text) = exec(&["bounds-check", "--trace", trace.to_str().unwrap(), "--out", reports.to_str().unwrap()]);
    assert_eq!(c, 0, "{text}");
    assert!(text.contains("dual_violations=0 primal_violations=0"), "{text}");
    assert!(text.contains("replayed, 0 mismatches"), "{text}");
    assert!(reports.join("dual_rate.csv").exists());
    assert!(reports.join("primal_rate.csv").exists());
}

#[test]
fn strided_trace_is_checked_without_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (c, _) = exec(&["flow", "--alpha", "0.1", "--every", "50", "--out", out]);
    assert_eq!(c, 0);
    let trace = dir.path().join(trace_file_name(0.1, 0.1));
    let (c, text) = exec(&["bounds-check", "--trace", trace.to_str().unwrap()]);
    assert_eq!(c, 0, "{text}");
    assert!(text.contains("not replayed"), "{text}");
}

#[test]
fn tampered_bound_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    exec(&["flow", "--alpha", "0.1", "--out", out]);
    let path = dir.path().join(trace_file_name(0.1, 0.1));
    let text = fs::read_to_string(&path).unwrap();
    let header = text.lines().find(|l| l.starts_with("t,")).unwrap();
    let col = header.split(',').position(|c| c == "dual_bound").unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let idx = lines.iter().position(|l| l.starts_with("t,")).unwrap() + 5;
    let mut cells: Vec<String> = lines[idx].split(',').map(String::from).collect();
    cells[col] = "1e-300".into();
    lines[idx] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let (c, text) = exec(&["bounds-check", "--trace", path.to_str().unwrap()]);
    assert_eq!(c, 1, "{text}");
    assert!(text.contains("dual_violations=1"), "{text}");
}

#[test]
fn counterexample_writes_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (c, text) = exec(&["counterexample", "--out", out, "--inner"]);
    assert_eq!(c, 0);
    let rows = fs::read_to_string(dir.path().join("counterexample.csv")).unwrap();
    assert_eq!(rows.lines().count(), 11);
    let inner = fs::read_to_string(dir.path().join("counterexample_inner.csv")).unwrap();
    assert_eq!(inner.lines().count(), 1 + 10 * (500 + 1500));
    for v in ["x1:", "x2:", "mu:", "synchronized dual:"] {
        assert!(text.contains(v), "{text}");
    }
    assert!(text.contains("converged=true"), "{text}");
}

#[test]
fn short_horizon_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&["flow", "--alpha", "0.1", "--horizon", "100", "--out", out]), 1);
    // the partial trace is still written
    assert!(Path::new(out).join(trace_file_name(0.1, 0.1)).exists());
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&["flow"]), 2);
    assert_eq!(code(&["flow", "--alpha", "abc"]), 2);
    assert_eq!(code(&["flow", "--alpha", "-1", "--out", out]), 2);
    assert_eq!(code(&["flow", "--alpha", "0.1", "--every", "0", "--out", out]), 2);
    assert_eq!(code(&["no-such-command"]), 2);

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "capacity = 10\nwieght = 3\n").unwrap();
    assert_eq!(code(&["flow", "--alpha", "0.1", "--config", cfg.to_str().unwrap(), "--out", out]), 2);
    assert_eq!(code(&["flow", "--alpha", "0.1", "--config", "/nonexistent/x.cfg", "--out", out]), 2);
    assert_eq!(code(&["bounds-check", "--trace", "/nonexistent/trace.csv"]), 2);
}

#[test]
fn config_file_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# dense schedule\np_update = 0.5\np_edge = 0.5\nround_min = 2\nround_max = 4\n").unwrap();
    let (c, text) = exec(&["flow", "--alpha", "0.1", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(c, 0, "{text}");
    let rounds: u64 = text.split("rounds=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(rounds < 6162, "{rounds}");
}
