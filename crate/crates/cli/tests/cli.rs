//! Exit-code contract and surface behavior of the `nosign` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nosign"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_matrix(path: &Path, n: usize, entries: &[f64]) {
    let mut text = format!("{n}\n");
    for row in entries.chunks(n) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

#[test]
fn moments_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(dir.path(), &["moments", "--dim", "2"]);
    assert!(ok.status.success());
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.starts_with("name,exact,quadrature,abs_error\n"));
    assert!(text.contains("S4,2.3561944901923448e0"));
    assert!(text.contains("S4/S22,3.0000000000000000e0"));

    let ok3 = run(dir.path(), &["moments", "--dim", "3"]);
    assert!(ok3.status.success());
    let text3 = String::from_utf8(ok3.stdout).unwrap();
    assert!(text3.contains("S4/S22,3.0000000000000000e0"));

    let bad = run(dir.path(), &["moments", "--dim", "5"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["moments", "--dim", "2", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mat");
    let b = dir.path().join("b.mat");
    write_matrix(&a, 2, &[1.0, 0.0, 0.0, 0.0]);
    write_matrix(&b, 2, &[0.0, 0.0, 0.0, 1.0]);

    let same = run(dir.path(), &["replay", "--a", "a.mat", "--b", "a.mat"]);
    assert_eq!(same.status.code(), Some(0));
    assert!(String::from_utf8(same.stdout)
        .unwrap()
        .contains("verdict: equal"));

    let diff = run(dir.path(), &["replay", "--a", "a.mat", "--b", "b.mat"]);
    assert_eq!(diff.status.code(), Some(4));
    let text = String::from_utf8(diff.stdout).unwrap();
    assert!(text.contains("verdict: distinct"));
    assert!(text.contains("witness pair (1,2)"));

    let missing = run(dir.path(), &["replay", "--a", "nope.mat", "--b", "b.mat"]);
    assert_eq!(missing.status.code(), Some(2));

    // Trace violation is a validation failure, not a verdict.
    let c = dir.path().join("c.mat");
    write_matrix(&c, 2, &[1.0, 0.0, 0.0, 1.0]);
    let bad = run(dir.path(), &["replay", "--a", "c.mat", "--b", "b.mat"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn solve_config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.txt"),
        "dim = 2\nnodes = 81\nboundary_preset = quadratic\npreset_params = a=1:0:0:0\n",
    )
    .unwrap();
    let out = run(
        dir.path(),
        &["solve", "--config", "cfg.txt", "--out", "u.fld"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("spacing"),
        "stderr should name the missing key: {err}"
    );

    let out = run(
        dir.path(),
        &["solve", "--config", "absent.txt", "--out", "u.fld"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn field_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let made = run(
        dir.path(),
        &[
            "make-field",
            "--preset",
            "quadratic",
            "--params",
            "m=65,a=1:0:0:0",
            "--out",
            "q.fld",
        ],
    );
    assert!(
        made.status.success(),
        "{}",
        String::from_utf8_lossy(&made.stderr)
    );

    write_matrix(&dir.path().join("qplus.mat"), 2, &[1.0, 0.0, 0.0, 0.0]);
    let trace = run(
        dir.path(),
        &[
            "monneau",
            "--field",
            "q.fld",
            "--center",
            "0,0",
            "--q",
            "qplus.mat",
            "--radii",
            "0.1:0.8:15",
            "--out",
            "trace.csv",
        ],
    );
    assert!(
        trace.status.success(),
        "{}",
        String::from_utf8_lossy(&trace.stderr)
    );
    let text = String::from_utf8(trace.stdout).unwrap();
    assert!(text.contains("samples=15"));
    assert!(
        text.contains("monotone=true"),
        "grid slack should absorb interpolation: {text}"
    );
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
    assert!(dir.path().join("trace.csv.jsonl").is_file());

    let geometric = run(
        dir.path(),
        &[
            "monneau",
            "--field",
            "q.fld",
            "--center",
            "0,0",
            "--q",
            "qplus.mat",
            "--radii",
            "0.1:0.8:8",
            "--geometric",
            "--out",
            "geo.csv",
        ],
    );
    assert!(geometric.status.success());

    let classify = run(
        dir.path(),
        &[
            "classify", "--field", "q.fld", "--center", "0,0", "--r0", "0.4", "--levels", "3",
        ],
    );
    assert!(classify.status.success());
    assert!(String::from_utf8(classify.stdout)
        .unwrap()
        .contains("classification=singular"));

    let off = run(
        dir.path(),
        &[
            "classify", "--field", "q.fld", "--center", "0.5,0", "--r0", "0.4", "--levels", "3",
        ],
    );
    assert!(off.status.success());
    assert!(String::from_utf8(off.stdout)
        .unwrap()
        .contains("classification=unresolved reason=not_free_boundary"));

    let blow = run(
        dir.path(),
        &[
            "blowup", "--field", "q.fld", "--center", "0,0", "--r0", "0.4", "--levels", "3",
            "--tol", "0.02", "--out", "rep.csv",
        ],
    );
    assert!(blow.status.success());
    assert!(dir.path().join("rep.csv").is_file());
    assert!(dir.path().join("rep.csv.jsonl").is_file());
}

#[test]
fn solve_writes_field_and_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.txt"),
        "mode = classical\ndim = 2\nnodes = 65\nspacing = 0.0390625\nboundary_preset = quadratic\npreset_params = a=1:0:0:0\n",
    )
    .unwrap();
    let out = run(
        dir.path(),
        &["solve", "--config", "cfg.txt", "--out", "u.fld"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("u.fld").is_file());
    let report = fs::read_to_string(dir.path().join("u.fld.jsonl")).unwrap();
    for line in report.lines() {
        let _: serde_json::Value = serde_json::from_str(line).unwrap();
    }
    let summary: serde_json::Value = serde_json::from_str(report.lines().last().unwrap()).unwrap();
    assert_eq!(summary["converged"], serde_json::Value::Bool(true));
    assert!(summary["final_residual"].as_f64().unwrap() <= 1e-8);

    // The written field feeds straight back into analysis.
    write_matrix(&dir.path().join("q.mat"), 2, &[1.0, 0.0, 0.0, 0.0]);
    let trace = run(
        dir.path(),
        &[
            "monneau",
            "--field",
            "u.fld",
            "--center",
            "0,0",
            "--q",
            "q.mat",
            "--radii",
            "0.1:0.8:15",
            "--out",
            "t.csv",
        ],
    );
    assert!(trace.status.success());
    assert!(String::from_utf8(trace.stdout)
        .unwrap()
        .contains("monotone=true"));
}

#[test]
fn no_sign_solve_from_config() {
    let dir = tempfile::tempdir().unwrap();
    // h = 2.5/80; stability thresholds chosen to exclude only the origin.
    fs::write(
        dir.path().join("cfg.txt"),
        "mode = no_sign\ndim = 2\nnodes = 81\nspacing = 0.03125\nboundary_preset = quadratic\npreset_params = a=2:0:0:-1\neps_u = 0.001953125\neps_g = 0.015625\n",
    )
    .unwrap();
    let out = run(
        dir.path(),
        &["solve", "--config", "cfg.txt", "--out", "u.fld"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mode=no_sign converged=true"));
    let outer: usize = text
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("outer="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(outer <= 10, "outer iterations {outer}");
}
