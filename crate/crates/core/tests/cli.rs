use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prollect"))
}

#[test]
fn verify_writes_reports_and_exits_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = std::fs::read_to_string(dir.path().join("verify_report.csv")).unwrap();
    assert!(report.starts_with("check,passed,margin,trials\n"));
    assert!(report
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("true")));
    let audit = std::fs::read_to_string(dir.path().join("timing_audit.csv")).unwrap();
    assert!(audit.starts_with("t_step,t_adj_max,jitter,min_idle_dwell,zeno_free\n"));
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run",
            "--scenario",
            "random",
            "--method",
            "orca",
            "--n",
            "8",
            "--seeds",
            "2",
            "--partition",
            "1,1",
            "--out-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let seeds = std::fs::read_to_string(dir.path().join("run_seeds.csv")).unwrap();
    assert_eq!(seeds.lines().count(), 3);
    assert!(seeds
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("random,orca,8,0,"));

    let out = bin()
        .arg("report")
        .arg(dir.path().join("run.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    let cells: Vec<&str> = table.lines().nth(2).unwrap().split_whitespace().collect();
    assert_eq!(&cells[..3], ["random", "orca", "2"]);
}

#[test]
fn bad_flags_are_rejected() {
    for args in [
        &["run", "--method", "rvo"][..],
        &["run", "--partition", "2"][..],
        &["run", "--p-drop", "1.5"][..],
        &["run", "--scenario", "intersection", "--n", "0"][..],
    ] {
        let out = bin().args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?} accepted");
    }
}
