use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn worldcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_worldcert"))
        .args(args)
        .env_remove("WORLDCERT_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn run_planted(out: &Path) -> Output {
    worldcert(&["run", "--config", config("planted_modadd.json").to_str().unwrap(), "--out", out.to_str().unwrap()])
}

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_planted(dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("containment"));
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("interventions_layer1.csv").exists());
    let o = worldcert(&["verify", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn tampered_report_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_planted(dir.path())), 0);
    let path = dir.path().join("report.json");
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    v["layers"][0]["results"][0]["score"] = serde_json::json!(0.5);
    std::fs::write(&path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    let o = worldcert(&["verify", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("layers[0].results[0].score"));
}

#[test]
fn missing_artifact_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_planted(dir.path())), 0);
    std::fs::remove_file(dir.path().join("eval.bin")).unwrap();
    assert_eq!(code(&worldcert(&["verify", dir.path().to_str().unwrap()])), 4);
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&worldcert(&["verify", empty.path().to_str().unwrap()])), 4);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(config("planted_modadd.json")).unwrap();
    std::fs::write(&path, text.replace("\"seed\"", "\"sede\"")).unwrap();
    let o = worldcert(&["run", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    let o = worldcert(&["run", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_and_export_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("planted_modadd.json");
    let o = worldcert(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--layers",
        "1",
        "--seeds",
        "0,1",
        "--workers",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(table.lines().next().unwrap().starts_with("config_hash,seed,layer"));
    let data = dir.path().join("eval.bin");
    let o = worldcert(&[
        "export-dataset",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
        "--rows",
        "50",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.exists());
}
