use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use franks_core::io::{FactorizationJson, MatrixJson};
use franks_core::poisson::{lift_a_pi, random_symplectic_near_identity};
use franks_core::suites::trial_rng;
use nalgebra::DMatrix;
use serde_json::Value;

fn franks(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_franks")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-tests").join(name);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, file: &str, text: &str) -> String {
    let p = dir.join(file);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn target(dir: &Path, d: usize, n: usize, delta: f64) -> (String, DMatrix<f64>) {
    let a = random_symplectic_near_identity(d, delta, &mut trial_rng(9, 0, (d * 10 + n) as u64)).unwrap();
    let m = MatrixJson::from_matrix(lift_a_pi(&a, n).matrix(), d, n);
    (write(dir, "A.json", &serde_json::to_string(&m).unwrap()), a.into_matrix())
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn decompose_reconstructs_target() {
    let dir = scratch("decompose");
    let (a_path, a) = target(&dir, 2, 1, 1e-3);
    let out = franks(&["decompose", "--target", &a_path]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let f: FactorizationJson = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(f.factors.len(), 8);
    assert!(f.residual <= 1e-9);
    assert!((f.product(2).unwrap() - a).amax() < 1e-12);
}

#[test]
fn decompose_rejects_non_symplectic_and_far_targets() {
    let dir = scratch("decompose-bad");
    let scaled = write(&dir, "s.json", r#"{"d":1,"n":0,"rows":[[2,0],[0,2]]}"#);
    assert_eq!(franks(&["decompose", "--target", &scaled]).status.code(), Some(1));
    let far = write(&dir, "f.json", r#"{"d":1,"n":0,"rows":[[3,0],[0,0.3333333333333333]]}"#);
    let out = franks(&["decompose", "--target", &far]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("near-identity"));
    let ragged = write(&dir, "r.json", r#"{"d":1,"n":0,"rows":[[1,0]]}"#);
    assert_eq!(franks(&["decompose", "--target", &ragged]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(franks(&["run-suite", "nonsense"]).status.code(), Some(2));
    assert_eq!(franks(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(franks(&["decompose"]).status.code(), Some(2));
    assert_eq!(franks(&["decompose", "--target", "/nonexistent/A.json"]).status.code(), Some(2));
    let dir = scratch("usage");
    let cfg = write(&dir, "cfg.json", r#"{"seed": 1, "flowz": {}}"#);
    let out = franks(&["run-suite", "flowbox", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flowz"));
}

#[test]
fn flow_writes_trajectory_csv() {
    let dir = scratch("flow");
    let h = write(&dir, "H.json", r#"{"kind":"rotation","d":1,"n":1,"alpha":0.5,"i":1}"#);
    let x0 = write(&dir, "x.json", "[0.1, 0.2, 0.3]");
    let csv = dir.join("t.csv");
    let out = franks(&["flow", "--hamiltonian", &h, "--x0", &x0, "--time", "1", "--every", "100", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,y1,z1,H");
    assert_eq!(lines.len(), 12);
    let h_col: Vec<f64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(h_col.iter().all(|v| (v - h_col[0]).abs() < 1e-12));
    // the Casimir column never moves
    assert!(lines[1..].iter().all(|l| l.split(',').nth(3) == Some("0.3")));
}

#[test]
fn realize_flow_output_rebuilds_through_poincare() {
    let dir = scratch("realize-flow");
    let (a_path, a) = target(&dir, 2, 0, 1e-2);
    let out = franks(&["realize-flow", "--target", &a_path, "--rho", "1.0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["report"]["pass"], Value::Bool(true));
    let field = write(&dir, "H.json", &v["hamiltonian"]["field"].to_string());
    let section = v["hamiltonian"]["section"].as_f64().unwrap().to_string();
    let p = franks(&["poincare", "--hamiltonian", &field, "--section", &section]);
    assert_eq!(p.status.code(), Some(0), "{}", String::from_utf8_lossy(&p.stderr));
    let pv = json(&p);
    let rows: Vec<Vec<f64>> = serde_json::from_value(pv["jacobian"].clone()).unwrap();
    let jac = DMatrix::from_fn(4, 4, |r, c| rows[r][c]);
    assert!((jac - a).amax() < 1e-5);
    assert!((pv["tau"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let check = franks(&["check", "--hamiltonian", &field]);
    assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stderr));
}

#[test]
fn realize_map_reports_pass_for_each_base() {
    let dir = scratch("realize-map");
    let (a_path, _) = target(&dir, 1, 1, 1e-2);
    let p = write(&dir, "p.json", r#"{"point": [0.1, -0.2, 0.4]}"#);
    let b = write(&dir, "B.json", r#"{"d":1,"n":1,"rows":[[1,0.2,0.5],[0,1,-0.3],[0,0,1.5]]}"#);
    for extra in [vec![], vec!["--base", "k-flow"], vec!["--base", "linear", "--base-matrix", &b]] {
        let mut args = vec!["realize-map", "--target", &a_path, "--rho", "0.5", "--point", &p];
        args.extend(extra.iter().copied());
        let out = franks(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let v = json(&out);
        assert_eq!(v["report"]["pass"], Value::Bool(true));
        assert_eq!(v["map"]["generators"].as_array().unwrap().len(), 4);
    }
    assert_eq!(franks(&["realize-map", "--target", &a_path, "--base", "linear"]).status.code(), Some(2));
}

#[test]
fn flowbox_report_and_table() {
    let dir = scratch("flowbox");
    let h = write(
        &dir,
        "Q.json",
        r#"{"kind":"quadratic","d":2,"n":1,
            "hessian":[[0,0,0,0,0],[0,0.1,0,0.02,0],[0,0,0,0,0],[0,0.02,0,0.05,0.01],[0,0,0,0.01,0.03]],
            "linear":[0,0,1,0,0]}"#,
    );
    let x = write(&dir, "x.json", "[0, 0.1, 0.2, -0.1, 0.3]");
    let table = dir.join("chart.csv");
    let out = franks(&["flowbox", "--hamiltonian", &h, "--base", &x, "--samples", "50", "--table", table.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["pass"], Value::Bool(true));
    let text = fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("x1,x2,y1,y2,z1,g_x1,g_x2,g_y1,g_y2,g_z1,H,G\n"));
    assert_eq!(text.lines().count(), 51);
    // g_y1 = −H and g_x1 = G on every row
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[7] + v[10]).abs() < 1e-8);
        assert_eq!(v[5], v[11]);
    }

    // A point where X_H vanishes has no flowbox.
    let still = write(&dir, "z.json", r#"{"kind":"quadratic","d":1,"n":0,"hessian":[[1,0],[0,1]]}"#);
    let origin = write(&dir, "o.json", "[0, 0]");
    assert_eq!(franks(&["flowbox", "--hamiltonian", &still, "--base", &origin]).status.code(), Some(1));
}

#[test]
fn run_suite_is_deterministic_and_honours_seed() {
    let dir = scratch("suite");
    let a = dir.join("a.json");
    let first = franks(&["run-suite", "flowbox", "--seed", "5", "--out", a.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0));
    let second = franks(&["run-suite", "flowbox", "--seed", "5"]);
    assert_eq!(fs::read(&a).unwrap(), second.stdout);
    let third = franks(&["run-suite", "flowbox", "--seed", "6"]);
    assert_ne!(second.stdout, third.stdout);
    let v = json(&second);
    assert_eq!(v["suite"], "flowbox");
    assert!(v["checks"].as_array().unwrap().len() >= 20);

    // Config fields apply and flags override them.
    let cfg = write(&dir, "cfg.json", r#"{"seed": 6, "flowbox": {"samples": 40}}"#);
    let from_cfg = franks(&["run-suite", "flowbox", "--config", &cfg]);
    assert_eq!(json(&from_cfg)["environment"]["flowbox/samples"], 40);
    let overridden = franks(&["run-suite", "flowbox", "--config", &cfg, "--seed", "5"]);
    assert_ne!(from_cfg.stdout, overridden.stdout);
}

#[test]
fn failing_tolerance_exits_one() {
    let dir = scratch("strict");
    let cfg = write(&dir, "cfg.json", r#"{"flowbox": {"samples": 20, "bracket_tol": 1e-30}}"#);
    let out = franks(&["run-suite", "flowbox", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["pass"], Value::Bool(false));
}
