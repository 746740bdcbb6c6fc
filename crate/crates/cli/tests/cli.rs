use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn facd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facd"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = facd(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    facd(args, cwd).status.code().expect("exited normally")
}

fn simulate_small(dir: &Path) {
    ok(
        &["simulate", "--out-dir", "sim", "--n", "60", "--p", "8", "--q", "6", "--components", "2", "--active", "3", "--seed", "11"],
        dir,
    );
}

fn fit_fixed(dir: &Path) {
    ok(
        &[
            "fit", "--x", "sim/x.csv", "--y", "sim/y.csv", "--out-dir", "fit", "--components", "2", "--rho-x", "0.01",
            "--rho-y", "0.01", "--grid-size", "41",
        ],
        dir,
    );
}

fn csv_rows(path: &Path) -> Vec<String> {
    let mut rows: Vec<String> = fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect();
    rows.sort();
    rows
}

#[test]
fn full_workflow_produces_consistent_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate_small(d);
    for f in ["x.csv", "y.csv", "truth.json"] {
        assert!(d.join("sim").join(f).is_file(), "{f}");
    }
    fit_fixed(d);
    for f in ["model.json", "loadings.csv", "scores.csv"] {
        assert!(d.join("fit").join(f).is_file(), "{f}");
    }

    // rescoring the training data reproduces the fitted scores
    ok(&["scores", "--model", "fit/model.json", "--x", "sim/x.csv", "--y", "sim/y.csv", "--out", "rescored.csv"], d);
    assert_eq!(csv_rows(&d.join("rescored.csv")), csv_rows(&d.join("fit/scores.csv")));

    // both evaluation routes agree
    ok(&["evaluate", "--truth", "sim/truth.json", "--model", "fit/model.json", "--out", "a.csv"], d);
    ok(
        &[
            "evaluate", "--truth", "sim/truth.json", "--loadings", "fit/loadings.csv", "--scores", "fit/scores.csv",
            "--out", "b.csv",
        ],
        d,
    );
    let a = csv_rows(&d.join("a.csv"));
    assert_eq!(a.len(), 2);
    assert_eq!(a, csv_rows(&d.join("b.csv")));

    ok(&["network", "--model", "fit/model.json", "--threshold", "0.1", "--out", "edges.csv"], d);
    assert!(fs::read_to_string(d.join("edges.csv")).unwrap().starts_with("component,"));

    let out = ok(&["plot", "--loadings", "fit/loadings.csv", "--scores", "fit/scores.csv", "--out-dir", "plots"], d);
    assert!(out.contains("wrote 6 plots"), "{out}");
    let svg = fs::read_to_string(d.join("plots/loadings_c1_x.svg")).unwrap();
    assert!(svg.contains("<svg"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate_small(d);
    fs::write(
        d.join("run.json"),
        r#"{"facd": {"grid_size": 41, "n_components": 2, "sparsity": {"mode": "fixed", "rho_x": 0.0, "rho_y": 0.0}}}"#,
    )
    .unwrap();
    let out = ok(
        &["fit", "--x", "sim/x.csv", "--y", "sim/y.csv", "--out-dir", "fit", "--config", "run.json", "--components", "1"],
        d,
    );
    assert!(out.contains("component 1:") && !out.contains("component 2:"), "{out}");
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("fit/model.json")).unwrap()).unwrap();
    assert_eq!(model["model"]["grid"]["points"].as_array().map(Vec::len), Some(41));
}

#[test]
fn simulation_is_reproducible_from_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["simulate", "--out-dir", "a", "--n", "20", "--p", "5", "--q", "5", "--components", "2", "--active", "2", "--seed", "4"], d);
    ok(&["simulate", "--out-dir", "b", "--n", "20", "--p", "5", "--q", "5", "--components", "2", "--active", "2", "--seed", "4"], d);
    for f in ["x.csv", "y.csv", "truth.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn user_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate_small(d);
    assert_eq!(code(&["bogus"], d), 1);
    assert_eq!(code(&["fit", "--x", "sim/x.csv"], d), 1);
    assert_eq!(code(&["fit", "--x", "missing.csv", "--y", "sim/y.csv", "--out-dir", "o"], d), 1);
    assert_eq!(
        code(&["fit", "--x", "sim/x.csv", "--y", "sim/y.csv", "--out-dir", "o", "--components", "0"], d),
        1
    );

    fs::write(d.join("bad.json"), r#"{"facd": {"no_such_field": 1}}"#).unwrap();
    assert_eq!(code(&["fit", "--x", "sim/x.csv", "--y", "sim/y.csv", "--out-dir", "o", "--config", "bad.json"], d), 1);

    fs::write(d.join("broken.csv"), "subject,time,feature,value\ns1,0.5,a,oops\n").unwrap();
    let out = facd(&["fit", "--x", "broken.csv", "--y", "sim/y.csv", "--out-dir", "o"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    assert_eq!(code(&["network", "--model", "sim/truth.json", "--out", "e.csv"], d), 1);
    assert_eq!(code(&["simulate", "--out-dir", "s", "--active", "50", "--p", "10"], d), 1);
}

#[test]
fn help_and_version_exit_with_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["--help"], tmp.path()), 0);
    assert_eq!(code(&["fit", "--help"], tmp.path()), 0);
    assert_eq!(code(&["--version"], tmp.path()), 0);
}
