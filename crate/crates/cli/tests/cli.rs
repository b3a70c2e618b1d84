use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use metalyap::Certificate;

fn systems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../systems")
}

fn metalyap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metalyap")).args(args).output().expect("binary runs")
}

fn two_mode() -> String {
    systems().join("two_mode.json").display().to_string()
}

fn unstable() -> String {
    systems().join("unstable.json").display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn certify_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = metalyap(&["certify", "--system", &two_mode(), "--c", "3", "--objective", "x2", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let cert = dir.path().join("cert_c3_x2.json");
    let loaded = Certificate::load(&cert).unwrap();
    assert_eq!((loaded.n, loaded.c), (2, 3));

    let o = metalyap(&["validate", "--cert", cert.to_str().unwrap(), "--system", &two_mode()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn tampered_certificate_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(metalyap(&["certify", "--system", &two_mode(), "--c", "2", "--out", out]).status.code(), Some(0));
    let path = dir.path().join("cert_c2_x1.json");
    let mut json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    json["P"][0][0] = serde_json::json!(0.5);
    fs::write(&path, json.to_string()).unwrap();
    let o = metalyap(&["validate", "--cert", path.to_str().unwrap(), "--system", &two_mode()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn unstable_system_is_rejected_and_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = metalyap(&["certify", "--system", &unstable(), "--c", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not Hurwitz"));

    let o = metalyap(&["simulate", "--system", &unstable(), "--policy", "fixed:1", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["diverged"], 1);
    assert!(report["details"][0]["divergence"]["time"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_writes_table_and_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = metalyap(&["sweep", "--system", &two_mode(), "--c-range", "1..3", "--jobs", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "c,order,status,iterations,runtime_s,P11");
    assert_eq!(lines.len(), 4);
    for (k, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], (k + 1).to_string());
        assert_eq!(cols[1], (2 * (k + 1)).to_string());
        assert_eq!(cols[2], "feasible");
        assert!(dir.path().join(format!("cert_c{}_x1.json", k + 1)).exists());
    }
}

#[test]
fn certificates_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = metalyap(&["certify", "--system", &two_mode(), "--c", "4", "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| Certificate::load(d.path().join("cert_c4_x1.json")).unwrap();
    let (x, y) = (read(&a), read(&b));
    assert_eq!(x.p, y.p);
    assert_eq!(x.margins, y.margins);
    assert_eq!(x.solver.iterations, y.solver.iterations);
}

#[test]
fn invariant_sets_from_files_and_intersection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for c in ["1", "4"] {
        assert_eq!(metalyap(&["certify", "--system", &two_mode(), "--c", c, "--out", out]).status.code(), Some(0));
    }
    let certs = format!("{out}/cert_c1_x1.json,{out}/cert_c4_x1.json");
    let o = metalyap(&[
        "invariant-set", "--system", &two_mode(), "--x0", "1,0", "--cert", &certs, "--samples", "360", "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let areas: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("areas.json")).unwrap()).unwrap();
    let sets = areas["sets"].as_array().unwrap();
    assert_eq!(sets[0]["label"], "c4-x1");
    assert_eq!(sets[1]["label"], "c1-x1");
    let inter = areas["intersection"]["area"].as_f64().unwrap();
    for s in sets {
        assert!(inter <= s["area"].as_f64().unwrap() + 1e-12);
        assert_eq!(s["samples"], 360);
    }
    let csv = fs::read_to_string(dir.path().join("set_c4_x1.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("theta,r,x1,x2"));
    assert_eq!(csv.lines().count(), 362);

    let o = metalyap(&["invariant-set", "--system", &two_mode(), "--x0", "0,0", "--c", "1", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulation_checks_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(metalyap(&["certify", "--system", &two_mode(), "--c", "2", "--out", out]).status.code(), Some(0));
    let cert = format!("{out}/cert_c2_x1.json");
    let o = metalyap(&[
        "simulate", "--system", &two_mode(), "--cert", &cert, "--seeds", "3..6", "--horizon", "5", "--every", "50", "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for s in 3..6 {
        assert!(dir.path().join(format!("traj_seed{s}.csv")).exists());
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"], 3);
    assert_eq!(report["monotonicity_violations"], 0);
    assert!(report["details"][0]["worst_level_ratio"].as_f64().unwrap() <= 1.0 + 1e-9);

    let o = metalyap(&["simulate", "--system", &two_mode(), "--policy", "adversarial", "--out", out]);
    assert_eq!(o.status.code(), Some(1), "adversarial without a certificate");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let cfg_out = dir.path().join("from_config");
    fs::write(
        &cfg,
        serde_json::json!({ "system": two_mode(), "c": 2, "objective": "feas", "out": cfg_out }).to_string(),
    )
    .unwrap();
    let o = metalyap(&["--config", cfg.to_str().unwrap(), "certify"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(cfg_out.join("cert_c2_feas.json").exists());

    let o = metalyap(&["--config", cfg.to_str().unwrap(), "certify", "--c", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(cfg_out.join("cert_c3_feas.json").exists());

    fs::write(&cfg, r#"{"sytem": "typo.json"}"#).unwrap();
    assert_eq!(metalyap(&["--config", cfg.to_str().unwrap(), "certify"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(metalyap(&["certify", "--bogus"]).status.code(), Some(1));
    assert_eq!(metalyap(&["certify"]).status.code(), Some(1));
    assert_eq!(metalyap(&["sweep", "--system", &two_mode(), "--c-range", "5..2"]).status.code(), Some(1));
    assert_eq!(metalyap(&["certify", "--system", "no/such/file.json"]).status.code(), Some(1));
    assert_eq!(metalyap(&["--help"]).status.code(), Some(0));
}
