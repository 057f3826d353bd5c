use std::fs;
use std::process::Command;

fn pmaflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmaflow"))
}

#[test]
fn solve_writes_stamped_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let status = pmaflow()
        .args(["solve", "--problem", "stationary_quadratic", "--h", "0.25", "--T", "0.1", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let resolved = fs::read_to_string(dir.path().join("resolved_config.json")).unwrap();
    assert!(resolved.contains("\"stationary_quadratic\""));
    let snap = fs::read_to_string(dir.path().join("snapshot_000.csv")).unwrap();
    let mut lines = snap.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert!(lines.next().unwrap().starts_with("# t="));
    assert_eq!(lines.next().unwrap(), "x1,x2,u");
}

#[test]
fn unknown_config_key_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"command":"solve","problem":"mms_quadratic","stepsize":0.1}"#).unwrap();
    let out = pmaflow().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8(out.stdout).unwrap();
    assert!(msg.contains("UnknownKey") && msg.contains("stepsize"), "{msg}");
}

#[test]
fn negative_spacing_is_a_range_error() {
    let out = pmaflow().args(["solve", "--problem", "mms_quadratic", "--h", "-0.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout).unwrap().contains("RangeError"));
}

#[test]
fn solver_failure_writes_failure_report() {
    let dir = tempfile::tempdir().unwrap();
    let status = pmaflow().args(["solve", "--problem", "no_such_problem", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let report = fs::read_to_string(dir.path().join("failure.json")).unwrap();
    assert!(report.contains("UnknownProblem"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let status = pmaflow()
            .env("PMAFLOW_THREADS", threads)
            .args(["verify", "--problem", "mms_quadratic", "--h", "0.25", "--T", "0.2", "--seed", "5", "--out"])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        let mut files: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_owned(), fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn bump_subcommand_prints_closed_forms() {
    let out = pmaflow().args(["bump", "--x", "0.5", "--A", "1", "--B", "1"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let w: f64 = text.lines().find_map(|l| l.strip_prefix("w=")).unwrap().parse().unwrap();
    assert!((w - (-16f64).exp()).abs() < 1e-20);
}
