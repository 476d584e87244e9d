use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn collapse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collapse")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn transit_happy_path_writes_report_and_series() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = collapse(&["--scenario", "transit", "--config", &config("transit.json"), "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 7);
    assert_eq!(report["engine_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["config"]["region_b"], serde_json::json!([[3.0, 5.0]]));

    // last Lambda_B row equals the reported witness value exactly
    let csv = fs::read_to_string(out.join("series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,alive_count,Lambda_A,Lambda_B"));
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(last[3], report["scalars"]["witness_lambda_b"].as_f64().unwrap());
}

#[test]
fn missing_region_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        r#"{"grid": {"n_points": 64, "x_min": -8, "x_max": 8}, "region_a": [[-1, 1]], "t_a": 0, "t_b": 1,
            "gaussian": {"x0": 0, "sigma": 1}}"#,
    );
    let out = tmp.path().join("r");
    let o = collapse(&["--scenario", "transit", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("region_b"));
    assert!(!out.join("report.json").exists());
}

#[test]
fn invalid_values_and_unreadable_config_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "axis.json", r#"{"scenario": "eprb", "alice_axis": [1, 1, 0], "bob_axis": [0, 0, 1]}"#);
    let o = collapse(&["--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = collapse(&["--config", tmp.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = collapse(&["--config", &config("eprb.json"), "--lambda", "0.5", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = write(tmp.path(), "file", "not a directory");
    let out = format!("{blocker}/sub");
    let o = collapse(&["--config", &config("eprb.json"), "--out", &out]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["history_spins.json", "transit.json"] {
        let (a, b) = (tmp.path().join(format!("a-{name}")), tmp.path().join(format!("b-{name}")));
        for dir in [&a, &b] {
            let o = collapse(&["--config", &config(name), "--seed", "42", "--out", dir.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0));
        }
        assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    }
}

#[test]
fn config_echo_reruns_to_the_same_report() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let o = collapse(&["--config", &config("history_grid.json"), "--seed", "9", "--ensemble-size", "200", "--out", first.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(first.join("report.json")).unwrap()).unwrap();
    let echo = write(tmp.path(), "echo.json", &report["config"].to_string());
    let second = tmp.path().join("second");
    let o = collapse(&["--config", &echo, "--out", second.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(first.join("report.json")).unwrap(), fs::read(second.join("report.json")).unwrap());

    // the history chain never grows
    let csv = fs::read_to_string(first.join("series.csv")).unwrap();
    let alive: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(alive.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn empty_history_series_is_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{"scenario": "history", "system": {"type": "spins", "count": 1}, "events": [], "times": [0.0], "ensemble_size": 3}"#;
    let cfg = write(tmp.path(), "h.json", text);
    let o = collapse(&["--config", &cfg, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("r/series.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}
