//! End-to-end behavior of the binary: exit codes, file outputs, and
//! diagnostics.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_costate"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("costate-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_planar_csv_last_row_matches_closed_form() {
    let dir = temp_dir("simulate");
    let model = dir.join("model.json");
    std::fs::write(
        &model,
        r#"{"family": "sdriven", "m": 2, "s": "x1*sin(t) - x2*cos(t)",
            "x_star": [0.0, 0.0], "c": [1.0, 0.0]}"#,
    )
    .unwrap();
    let status = bin()
        .args([
            "simulate",
            "--model",
            model.to_str().unwrap(),
            "--t-end",
            "10",
            "--out",
            dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let csv = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,y_1,y_2,w");
    let last = lines.last().unwrap();
    let cols: Vec<f64> = last.split(',').map(|v| v.parse().unwrap()).collect();
    // y(10) = x* + (1 - e^{-20}) (1, 0).
    assert!((cols[0] - 10.0).abs() < 1e-12);
    assert!(
        (cols[1] - (1.0 - (-20.0f64).exp())).abs() < 1e-8,
        "{}",
        cols[1]
    );
    assert!(cols[2].abs() < 1e-8);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn zero_dynamics_model_gives_constant_columns() {
    let dir = temp_dir("zero");
    let model = dir.join("model.json");
    std::fs::write(
        &model,
        r#"{"family": "custom", "m": 1, "k": 1, "f": ["0"], "f0": "0",
            "x0": [0.7], "control": {"kind": "constant", "values": [0.0]}}"#,
    )
    .unwrap();
    let status = bin()
        .args([
            "simulate",
            "--model",
            model.to_str().unwrap(),
            "--t-end",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols[1], 0.7);
        assert_eq!(cols[2], 0.0);
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn simulate_json_format_writes_rows() {
    let dir = temp_dir("json-format");
    let status = bin()
        .args([
            "simulate",
            "--model",
            "oscillator",
            "--t-end",
            "3",
            "--format",
            "json",
            "--out",
            dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("trajectory.json")).unwrap())
            .unwrap();
    let rows = rows.as_array().unwrap();
    assert!(rows.len() >= 2);
    assert_eq!(rows[0]["t"].as_f64().unwrap(), 0.0);
    assert_eq!(rows[0]["y"][0].as_f64().unwrap(), 0.0);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn corrupt_model_file_exits_2_and_names_the_problem() {
    let dir = temp_dir("corrupt");
    let model = dir.join("model.json");
    std::fs::write(&model, r#"{"family": "ramsey", "f": "sqrt(x1)"}"#).unwrap();
    let output = bin()
        .args(["simulate", "--model", model.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("f0"),
        "diagnostic must name the missing key: {stderr}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn unknown_verify_suite_exits_2() {
    let output = bin().args(["verify", "nonesuch"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verify_ramsey_reports_stationary_point() {
    let dir = temp_dir("verify");
    let report_path = dir.join("verify_report.json");
    let status = bin()
        .args(["verify", "ramsey", "--out", report_path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success(), "ramsey suite must pass");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let x0 = report["result"]["x0"].as_f64().unwrap();
    assert!(
        (x0 - 4.0).abs() < 1e-10,
        "report must contain x0 = 4, got {x0}"
    );
    assert_eq!(report["result"]["passed"], serde_json::Value::Bool(true));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn ak_exit_code_signals_convergence() {
    let dir = temp_dir("ak");
    // Oscillator: converges to zero (exit 0).
    let status = bin()
        .args([
            "ak",
            "--model",
            "oscillator",
            "--out",
            dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    // Planar: oscillates (exit 1), and the partials CSV traces the circle.
    let status = bin()
        .args(["ak", "--model", "planar", "--out", dir.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let csv = std::fs::read_to_string(dir.join("ak_partials.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let cols: Vec<f64> = last
        .split(',')
        .map(|v| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.parse().unwrap()
            }
        })
        .collect();
    let theta = cols[0];
    assert!((cols[1] - theta.sin()).abs() < 1e-6);
    assert!((cols[2] - (1.0 - theta.cos())).abs() < 1e-6);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn ak_converges_for_growth_preset() {
    // State-independent integrand: every partial integral is zero, the
    // limit converges, exit code 0.
    let dir = temp_dir("ak-growth");
    let status = bin()
        .args(["ak", "--model", "ramsey", "--out", dir.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ak_report.json")).unwrap())
            .unwrap();
    let value = report["result"]["status"]["Converged"]["value"][0]
        .as_f64()
        .unwrap();
    assert!(value.abs() < 1e-9, "limit must be zero, got {value}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn wakk_membership_exit_codes() {
    let dir = temp_dir("wakk");
    // A family arc well inside the limit disk: member (exit 0).
    let model = dir.join("inside.json");
    std::fs::write(
        &model,
        r#"{"family": "sdriven", "m": 2, "s": "x1*sin(t) - x2*cos(t)",
            "x_star": [0.0, 0.0], "c": [0.4, 0.1]}"#,
    )
    .unwrap();
    let status = bin()
        .args([
            "wakk",
            "--model",
            model.to_str().unwrap(),
            "--levels",
            "6",
            "--samples",
            "24",
            "--theta-max",
            "75.398223686155",
            "--out",
            dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // Outside the disk: non-member (exit 1).
    let model = dir.join("outside.json");
    std::fs::write(
        &model,
        r#"{"family": "sdriven", "m": 2, "s": "x1*sin(t) - x2*cos(t)",
            "x_star": [0.0, 0.0], "c": [1.3, 0.0]}"#,
    )
    .unwrap();
    let status = bin()
        .args([
            "wakk",
            "--model",
            model.to_str().unwrap(),
            "--levels",
            "6",
            "--samples",
            "24",
            "--theta-max",
            "75.398223686155",
            "--out",
            dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn gradient_warns_nothing_for_well_conditioned_path() {
    let dir = temp_dir("gradient");
    let output = bin()
        .args([
            "gradient",
            "--model",
            "oscillator",
            "--theta",
            "6",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).is_empty());
    let csv = std::fs::read_to_string(dir.join("sensitivity.csv")).unwrap();
    assert!(csv.starts_with("t,a_11,g_1"));
    let _ = std::fs::remove_dir_all(&dir);
}
