use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eloreview"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("ELOREVIEW_API_KEY").output().expect("spawn eloreview")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_pool(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("pool.jsonl");
    let out = run(&["gen-pool", "--n", &n.to_string(), "--seed", "7", "--out", s(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn gen_pool_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let pool = gen_pool(dir.path(), 60);
    let text = std::fs::read_to_string(&pool).unwrap();
    assert_eq!(text.lines().count(), 60);
    let out = run(&["validate-pool", s(&pool)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("60 papers OK"));
}

#[test]
fn validate_pool_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let pool = gen_pool(dir.path(), 3);
    let mut text = std::fs::read_to_string(&pool).unwrap();
    text.push_str("{\"id\": \"broken\"\n");
    std::fs::write(&pool, text).unwrap();
    let out = run(&["validate-pool", s(&pool)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":4"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["--json", "validate-pool", s(&pool)]);
    assert_eq!(out.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(line["level"], "error");
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let out = run(&["run", "--pool", "p.jsonl", "--out", "t.jsonl", "--mode", "everything"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--pool", s(&dir.path().join("missing.jsonl")), "--out", s(&dir.path().join("t.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));

    let pool = gen_pool(dir.path(), 60);
    let out = run(&["--json", "run", "--pool", s(&pool), "--out", s(&dir.path().join("t.jsonl")), "--provider", "live"]);
    assert_eq!(out.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert!(line["message"].as_str().unwrap().contains("ELOREVIEW_API_KEY"));
}

#[test]
fn invalid_config_lists_fields() {
    let dir = tempfile::tempdir().unwrap();
    let pool = gen_pool(dir.path(), 60);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "rounds = 0\npapers_per_round = 3\n").unwrap();
    let out = run(&["run", "--config", s(&cfg), "--pool", s(&pool), "--out", s(&dir.path().join("t.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rounds") && err.contains("papers_per_round"), "{err}");
}

#[test]
fn run_replay_report_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let pool = gen_pool(dir.path(), 60);
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let o = run(&["run", "--pool", s(&pool), "--mode", "full-access", "--seed", "42", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // scripted from the first transcript's call log
    let c = dir.path().join("c.jsonl");
    let o = run(&["run", "--pool", s(&pool), "--mode", "full-access", "--seed", "42", "--out", s(&c), "--script", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    let o = run(&["replay", "--transcript", s(&a)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "MATCH");

    let rep = dir.path().join("report");
    let o = run(&["report", "--transcript", s(&a), "--out", s(&rep)]);
    assert!(o.status.success());
    let metrics = std::fs::read_to_string(rep.join("metrics.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(metrics.as_bytes());
    let row = rows.records().next().unwrap().unwrap();
    assert_eq!(&row[1], "60");
    let traj = std::fs::read_to_string(rep.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 6 * 31);
    let svg = std::fs::read_to_string(rep.join("elo.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 6);
    assert!(std::fs::read_to_string(rep.join("report.txt")).unwrap().contains("Acc."));
}

#[test]
fn stop_and_resume_matches_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let pool = gen_pool(dir.path(), 60);
    let full = dir.path().join("full.jsonl");
    let part = dir.path().join("part.jsonl");
    assert!(run(&["run", "--pool", s(&pool), "--mode", "ac-access", "--seed", "3", "--out", s(&full)]).status.success());
    let o = run(&["run", "--pool", s(&pool), "--mode", "ac-access", "--seed", "3", "--out", s(&part), "--stop-after", "7"]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(&full).unwrap(), std::fs::read(&part).unwrap());
    assert!(run(&["run", "--resume", s(&part)]).status.success());
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&part).unwrap());
}

#[test]
fn tag_table_script() {
    let dir = tempfile::tempdir().unwrap();
    let pool = gen_pool(dir.path(), 60);
    let script = dir.path().join("script.jsonl");
    std::fs::write(&script, "{\"tag\": \"round1/x/ac\", \"text\": \"{}\"}\n").unwrap();
    let o = run(&["--json", "run", "--pool", s(&pool), "--out", s(&dir.path().join("t.jsonl")), "--script", s(&script)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no script entry"), "{}", String::from_utf8_lossy(&o.stderr));
}
