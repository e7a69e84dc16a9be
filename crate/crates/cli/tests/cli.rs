use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vortexlab"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn smoke_sweep_writes_report_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["sweep", "--config"])
        .arg(config("disc_smoke.json"))
        .arg("--out")
        .arg(dir.path())
        .args(["--threads", "1"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("config_hash,eps,h,status,d,"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), header.split(',').count());
    assert_eq!(row[3], "ok");
    for f in ["summary.json", "predictions.json", "f_eps.svg", "splits.svg", "vorticity.svg", "density.svg"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }

    // identical config gives byte-identical rows
    let again = tempfile::tempdir().unwrap();
    let st = bin()
        .arg("sweep")
        .arg("--config")
        .arg(config("disc_smoke.json"))
        .arg("--out")
        .arg(again.path())
        .output()
        .unwrap();
    assert!(st.status.success());
    assert_eq!(csv, std::fs::read_to_string(again.path().join("report.csv")).unwrap());

    // render is a pure function of the CSV files
    let st = bin().arg("render").arg("--out").arg(dir.path()).output().unwrap();
    assert!(st.status.success());
}

#[test]
fn predict_prints_targets() {
    let out = bin().arg("predict").arg("--config").arg(config("disc_smoke.json")).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let f = v["f_target"].as_f64().unwrap();
    assert!((f + 9.065).abs() < 0.2, "{f}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"domain": {"kind": "disc", "radius": 1.0}}"#).unwrap();
    let out = bin().arg("sweep").arg("--config").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let text = std::fs::read_to_string(config("disc_smoke.json")).unwrap().replace("[0.04]", "[0.02, 0.04]");
    std::fs::write(&bad, text).unwrap();
    let out = bin().arg("predict").arg("--config").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().arg("predict").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn annulus_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("annulus")
        .arg("--config")
        .arg(config("annulus_example.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.last().unwrap()["d"].as_i64(), Some(17));
    assert!(dir.path().join("hole_modes.csv").exists());
}
