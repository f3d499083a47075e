use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fkplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkplab"))
        .args(args)
        .env_remove("FKPLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn constant_weight_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "one.json", r#"{"n": 1, "family": "constant", "params": {"c": 1.0}}"#);
    let out = dir.path().join("o");
    let res = fkplab(&["weight", "analyze", "--weight", &w, "--out", out.to_str().unwrap(), "--samples", "3"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(v["ainfty"]["value"], 1.0);
    assert_eq!(v["carleson"]["value"], 0.0);
    assert!(v["good_doubling"].as_array().unwrap().iter().all(|r| r["certified"] == true));
}

#[test]
fn square_weight_identity_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "sq.json", r#"{"n": 1, "family": "power", "params": {"a": 2.0}}"#);
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"family": {"region": [0.5, 2.0], "scales": [0.25, 1.0], "centers": 3, "radii": 3}}"#,
    );
    let out = dir.path().join("o");
    let res = fkplab(&["fkp", "check", "--config", &cfg, "--weight", &w, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out.join("identity.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x0,x1,r,lhs,h1,h2,h1_tilde,residual,verbatim_residual,budget,quad_error,passed"
    );
    assert_eq!(lines.clone().count(), 9);
    assert!(lines.all(|l| l.ends_with(",true")));
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"family": {"centers": 3, "radii": 2}, "sweep": {"values": [0.4, 0.2]}}"#,
    );
    let mut bodies = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("o{k}"));
        let res = fkplab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        bodies.push(std::fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    let text = String::from_utf8(bodies.remove(0)).unwrap();
    assert!(text.starts_with("t,carleson_norm,ainfty_minus_1,error_term,quad_error\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn flags_override_config_in_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", r#"{"tol": 1e-6, "family": {"centers": 5}}"#);
    let res = fkplab(&["sweep", "--config", &cfg, "--tol", "1e-4", "--print-effective-config"]);
    assert_eq!(res.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["tol"], 1e-4);
    assert_eq!(v["family"]["centers"], 5);
    assert_eq!(v["family"]["radii"], 8);
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", r#"{"sweep": {"values": "soon"}}"#);
    let res = fkplab(&["sweep", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("sweep.values"));

    let res = fkplab(&["weight", "analyze", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("`weight`"));

    let res = fkplab(&["sweep", "--tol=0"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("`tol`"));

    let res = fkplab(&["no-such-command"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn dkp_solve_for_the_laplacian() {
    let dir = tempfile::tempdir().unwrap();
    let field = write(
        dir.path(),
        "field.json",
        r#"{"grid": {"half_width": 4.0, "height": 16.0, "ny": 64, "ns": 64}, "lambda": 1.0, "family": "identity"}"#,
    );
    let out = dir.path().join("o");
    let res = fkplab(&["dkp", "solve", "--coefficients", &field, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out.join("density.csv")).unwrap();
    assert!(text.starts_with("y,density\n"));
    for line in text.lines().skip(1) {
        let d: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((d - 1.0).abs() < 1e-9, "{line}");
    }
}

#[test]
fn binary_coefficients_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let grid = fkplab_dkp::BoxGrid::new(4.0, 16.0, 64, 64).unwrap();
    let f = fkplab_dkp::CoefficientField::identity(grid).unwrap();
    let path = dir.path().join("field.bin");
    std::fs::write(&path, f.to_bytes()).unwrap();
    let out = dir.path().join("o");
    let res = fkplab(&["dkp", "solve", "--coefficients", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    std::fs::write(&path, b"not a field").unwrap();
    let res = fkplab(&["dkp", "solve", "--coefficients", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("`coefficients`"));
}

#[test]
fn kernel_table_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = fkplab(&["kernel-table", "--kind", "reference-bump", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("kernel_table.csv")).unwrap();
    assert!(text.starts_with("rho,value,derivative\n"));
    assert!(text.lines().count() > 100);
}
