use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nsp-sim"));
    c.env_remove("NSP_SIM_PRESET_DIR");
    c
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.cfg");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_bundled_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(repo_file("scenarios/resnet_migration.cfg"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert_eq!(format!("{header}\n"), golden("trace_header.csv"));
    assert!(trace.lines().skip(1).all(|l| l.split(',').count() == 7));

    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let keys: Vec<&str> = metrics.as_object().unwrap().keys().map(String::as_str).collect();
    let expected: Vec<String> = golden("metrics_keys.txt").lines().map(str::to_string).collect();
    assert_eq!(keys, expected);
    let d = metrics["duty_cycle"].as_f64().unwrap();
    assert!(d > 0.0 && d <= 1.0, "duty cycle {d}");
}

#[test]
fn json_trace_uses_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[scenario]\nworkload = googlenet\nduration = 2 s\n");
    let out = bin()
        .args(["run", "--format", "json", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    let keys: BTreeSet<&str> = rows[0].as_object().unwrap().keys().map(String::as_str).collect();
    let header = golden("trace_header.csv");
    let expected: BTreeSet<&str> = header.trim().split(',').collect();
    assert_eq!(keys, expected);
}

#[test]
fn imaging_below_vision_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[scenario]\nworkload = resnet50\n[fidelity]\nvision_snr = 30 dB\nimaging_snr = 20 dB\n",
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("must be >= vision_snr"));
}

#[test]
fn unreachable_snr_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[scenario]\nworkload = resnet50\nlighting = 3.2 lux\n[fidelity]\nimaging_snr = 35 dB\n",
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_key_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[scenario]\nworkload = resnet50\nspeed = 3 W\n");
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

fn read_sweep(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("sweep.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fidelity_sweep_over_workloads() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--axis", "fidelity_snr", "--values", "35,26,20,none", "--workloads", "all", "--config"])
        .arg(repo_file("scenarios/resnet_migration.cfg"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_sweep(dir.path());
    assert_eq!(rows[0], ["workload", "axis_value", "metric", "value"]);
    let groups: BTreeSet<(String, String)> = rows[1..].iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    assert_eq!(groups.len(), 16);
}

#[test]
fn single_value_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("scenarios/resnet_migration.cfg");
    let run = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&run), 0);
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let sweep = bin()
        .args(["sweep", "--axis", "ambient", "--values", "25", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&sweep), 0);
    for row in &read_sweep(dir.path())[1..] {
        if let Some(v) = metrics.get(&row[1]).and_then(serde_json::Value::as_f64) {
            assert_eq!(row[2].parse::<f64>().unwrap(), v, "{}", row[1]);
        }
    }
}

#[test]
fn power_sweep_duty_cycle_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--axis", "nsp_power", "--values", "0.5:3.0:0.25", "--config"])
        .arg(repo_file("scenarios/resnet_migration.cfg"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let duty: Vec<f64> = read_sweep(dir.path())
        .iter()
        .filter(|r| r[1] == "duty_cycle")
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(duty.len(), 11);
    assert!(duty.windows(2).all(|w| w[1] <= w[0]), "{duty:?}");
}

#[test]
fn validate_default_and_perturbed() {
    let ok = bin().arg("validate").output().unwrap();
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[thermal]\nalpha_jump = 2.75 K/W\n");
    let bad = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&bad), 3);
    let table = String::from_utf8_lossy(&bad.stdout);
    assert!(table.lines().any(|l| l.starts_with("FAIL") && l.contains("jump")));
}

#[test]
fn missing_preset_directory() {
    let out = bin().arg("validate").env("NSP_SIM_PRESET_DIR", "/nonexistent/presets").output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn preset_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("tiny.cfg"),
        "[workload]\nname = tiny\nwidth = 640\nheight = 480\nfps = 30 Hz\ncompute_power = 200 mW\n",
    )
    .unwrap();
    let out = bin().arg("list-presets").env("NSP_SIM_PRESET_DIR", dir.path()).output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("tiny") && !text.contains("resnet50"));

    let builtin = bin().arg("list-presets").output().unwrap();
    assert!(String::from_utf8_lossy(&builtin.stdout).contains("resnet50"));
}

#[test]
fn fidelity_curve_csv() {
    let out = bin()
        .args(["fidelity-curve", "--lux", "3.2", "--from", "20", "--to", "80", "--step", "10"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "temperature_c,variance,snr_db");
    assert_eq!(lines.len(), 8);
    let snr: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(snr.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&bin().arg("bogus").output().unwrap()), 1);
    assert_eq!(code(&bin().args(["sweep", "--axis", "speed"]).output().unwrap()), 1);
}
