//! End-to-end tests of the binary: point files in, reports and experiment
//! outputs back, with the documented exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_conicfit")
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("conicfit-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn circle_csv(n: usize) -> String {
    let mut out = String::from("x,y\n");
    for i in 0..n {
        let t = i as f64 / n as f64 * std::f64::consts::TAU;
        out.push_str(&format!("{},{}\n", t.cos(), t.sin()));
    }
    out
}

#[test]
fn fit_exact_circle_reports_ellipse() {
    let dir = temp_dir("circle");
    std::fs::write(dir.join("points.csv"), circle_csv(8)).unwrap();
    let out = run(&["fit", "points.csv"], &dir);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["classification"], "ellipse");
    assert!(report["sigma2"].as_f64().unwrap() < 1e-16);
    let center = report["center"]["center"].as_array().unwrap();
    assert!(center[0].as_f64().unwrap().abs() < 1e-9);
    assert!(center[1].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn fit_with_type_ellipse_adds_typed_block() {
    let dir = temp_dir("typed");
    // A noisy eccentric quadrant (fixed pseudo-noise, no RNG dependency).
    let mut csv = String::from("x,y\n");
    for i in 0..20 {
        let t = i as f64 / 19.0 * std::f64::consts::FRAC_PI_2;
        let dx = 1e-3 * (((i * 7 + 3) % 11) as f64 - 5.0) / 5.0;
        let dy = 1e-3 * (((i * 13 + 1) % 9) as f64 - 4.0) / 4.0;
        csv.push_str(&format!("{},{}\n", t.cos() + dx, 0.1 * t.sin() + dy));
    }
    std::fs::write(dir.join("points.csv"), csv).unwrap();
    let out = run(&["fit", "points.csv", "--type", "ellipse"], &dir);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["typed"]["mean_classification"], "ellipse");
    assert!(report["typed"]["x0"].as_f64().is_some());
    assert!(report["typed"]["parabola"].as_array().unwrap().len() == 6);
}

#[test]
fn fit_csv_format_emits_key_value_rows() {
    let dir = temp_dir("csvfmt");
    std::fs::write(dir.join("points.csv"), circle_csv(10)).unwrap();
    let out = run(&["fit", "points.csv", "--format", "csv"], &dir);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text
        .lines()
        .any(|l| l.starts_with("classification,ellipse")));
}

#[test]
fn malformed_row_exits_one_naming_the_line() {
    let dir = temp_dir("badrow");
    std::fs::write(dir.join("points.csv"), "1.0,2.0\n0.5,0.5\n1.0,abc\n").unwrap();
    let out = run(&["fit", "points.csv"], &dir);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "stderr: {err}");
    assert!(err.contains("abc"));
}

#[test]
fn too_few_points_exits_one() {
    let dir = temp_dir("few");
    std::fs::write(dir.join("points.csv"), "1,0\n0,1\n-1,0\n").unwrap();
    let out = run(&["fit", "points.csv"], &dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn conflicting_flags_exit_three() {
    let dir = temp_dir("conflict");
    std::fs::write(dir.join("points.csv"), circle_csv(8)).unwrap();
    let out = run(&["fit", "points.csv", "--sampson", "--no-reweight"], &dir);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn experiment_writes_outputs_deterministically() {
    let dir = temp_dir("experiment");
    let config = r#"{
        "curve": {"kind": "ellipse", "semi_major": 1.0, "semi_minor": 0.1, "arc": [0.0, 1.5707963267948966]},
        "noise": {"sigma": 0.001, "seed": 11},
        "n_points": 20,
        "n_trials": 10,
        "pipeline": {"weighting": "reweighted", "curvature_correction": true},
        "outputs": {"summary_csv": "summary.csv", "trials_csv": "trials.csv", "svg": "plot.svg", "bbox": [-1.3, -0.4, 1.3, 0.4], "grid": 120}
    }"#;
    std::fs::write(dir.join("exp.json"), config).unwrap();

    let out = run(&["experiment", "exp.json"], &dir);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("row_type,"));
    assert!(summary.contains("coverage,0,"));
    assert!(summary.lines().any(|l| l.starts_with("classes,")));
    let trials = std::fs::read_to_string(dir.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 11); // header + 10 trials
    let svg1 = std::fs::read(dir.join("plot.svg")).unwrap();
    assert!(svg1.starts_with(b"<?xml"));

    // Byte-identical on a rerun.
    let out = run(&["experiment", "exp.json"], &dir);
    assert!(out.status.success());
    let svg2 = std::fs::read(dir.join("plot.svg")).unwrap();
    assert_eq!(svg1, svg2);
    let summary2 = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary, summary2);
}

#[test]
fn experiment_center_cloud() {
    let dir = temp_dir("centers");
    let config = r#"{
        "curve": {"kind": "ellipse", "semi_major": 1.0, "semi_minor": 0.1, "arc": [0.0, 1.5707963267948966]},
        "noise": {"sigma": 0.001, "seed": 12},
        "n_points": 20,
        "n_trials": 8,
        "pipeline": {"compute_center": true},
        "outputs": {"summary_csv": "summary.csv", "svg": "cloud.svg", "bbox": [-0.9, -0.12, 0.9, 0.12]}
    }"#;
    std::fs::write(dir.join("exp.json"), config).unwrap();
    let out = run(&["experiment", "exp.json"], &dir);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("center_raw_mean,")));
    assert!(summary
        .lines()
        .any(|l| l.starts_with("center_corrected_mean,")));
    assert!(dir.join("cloud.svg").exists());
}

#[test]
fn invalid_config_exits_three() {
    let dir = temp_dir("badconfig");
    std::fs::write(dir.join("exp.json"), "{\"curve\": 42}").unwrap();
    let out = run(&["experiment", "exp.json"], &dir);
    assert_eq!(out.status.code(), Some(3));

    // Structurally valid JSON, semantically bad values.
    let config = r#"{
        "curve": {"kind": "ellipse", "semi_major": 0.1, "semi_minor": 1.0, "arc": [0.0, 1.0]},
        "noise": {"sigma": 0.001, "seed": 1},
        "n_points": 20,
        "n_trials": 5
    }"#;
    std::fs::write(dir.join("exp2.json"), config).unwrap();
    let out = run(&["experiment", "exp2.json"], &dir);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_thread_env_exits_three() {
    let dir = temp_dir("threads");
    let config = r#"{
        "curve": {"kind": "ellipse", "semi_major": 1.0, "semi_minor": 0.5, "arc": [0.0, 6.283185307179586]},
        "noise": {"sigma": 0.0, "seed": 1},
        "n_points": 12,
        "n_trials": 1
    }"#;
    std::fs::write(dir.join("exp.json"), config).unwrap();
    let out = Command::new(bin())
        .args(["experiment", "exp.json"])
        .current_dir(&dir)
        .env("CONIC_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn selftest_is_deterministic_and_passes() {
    let dir = temp_dir("selftest");
    let first = run(&["selftest"], &dir);
    assert!(
        first.status.success(),
        "stdout: {}",
        String::from_utf8_lossy(&first.stdout)
    );
    let second = run(&["selftest"], &dir);
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8_lossy(&first.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS ")).count() >= 8);
    assert!(text.contains("selftest: all checks passed"));
}

#[test]
fn selftest_negative_control_fails() {
    let dir = temp_dir("selftest-neg");
    let out = run(&["selftest", "--no-curvature-correction"], &dir);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.lines()
            .any(|l| l.starts_with("FAIL curvature-bias-removal")),
        "stdout: {text}"
    );
}
