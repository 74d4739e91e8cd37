use std::path::Path;

use apspde::harness::cli::run_cli;

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["apspde"];
    argv.extend_from_slice(args);
    run_cli(argv)
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn invariant_test_with_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("inv");
    assert_eq!(cli(&["invariant-test", "--output-dir", out.to_str().unwrap()]), 0);
    let (header, rows) = read_csv(&out.join("invariant.csv"));
    assert_eq!(&header[..4], ["tau", "mode", "lambda", "residual"]);
    // default J = 16, five tau values
    assert_eq!(rows.len(), 80);
    for r in &rows {
        assert!(r[3].parse::<f64>().unwrap() <= 1e-12);
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["preserved"], true);
    assert_eq!(summary["command"], "invariant-test");
}

#[test]
fn weak_error_with_moment_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"spectrum": {"kind": "dirichlet", "J": 16},
            "nonlinearity": {"variant": "LINEAR_IN_Y", "params": {"c": 1.0}},
            "scheme": "COUPLED_MODIFIED", "T": 1.0, "N": 16, "eps": 1.0,
            "x0": [1.0], "y0": [1.0],
            "phi": {"kind": "NORM_SQUARED"}, "n_samples": 10, "master_seed": 0,
            "oracle": "MOMENT_ORACLE", "dt_list": [0.0625, 0.03125, 0.015625, 0.0078125]}"#,
    );
    let out = tmp.path().join("we");
    assert_eq!(cli(&["weak-error", "--config", &cfg, "--output-dir", out.to_str().unwrap()]), 0);
    let (header, rows) = read_csv(&out.join("curve.csv"));
    assert_eq!(header, ["dt", "error", "stderr", "oracle_bias"]);
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r[1].parse::<f64>().unwrap() > 0.0);
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let slope: f64 = summary["fit"]["slope"].as_str().unwrap().parse().unwrap();
    assert!(slope > 0.45, "{slope}");
    assert_eq!(summary["label"], "oracle functional");
    assert_eq!(summary["config"]["T"], 1.0);
}

#[test]
fn simulate_writes_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"spectrum": {"kind": "dirichlet", "J": 4},
            "nonlinearity": {"variant": "AFFINE", "params": {"c_x": 0.5, "c_y": 1.0}},
            "scheme": "COUPLED_EXPO", "T": 0.5, "N": 5, "eps": 0.1, "master_seed": 1}"#,
    );
    let out = tmp.path().join("sim");
    assert_eq!(cli(&["simulate", "--config", &cfg, "--output-dir", out.to_str().unwrap()]), 0);
    let (header, rows) = read_csv(&out.join("trajectory.csv"));
    assert_eq!(header, ["step", "mode", "x", "y"]);
    assert_eq!(rows.len(), 6 * 4);
    assert_eq!(rows.last().unwrap()[0], "5");
}

#[test]
fn uniform_sweep_and_ap_test_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"spectrum": {"kind": "dirichlet", "J": 8},
            "nonlinearity": {"variant": "LINEAR_IN_Y", "params": {"c": 1.0}},
            "T": 1.0, "N": 64, "x0": [1.0], "phi": {"kind": "BOUNDED_EXP"},
            "eps_list": [1.0, 0.0625, 0.00390625], "dt_list": [0.0625, 0.03125, 0.015625]}"#,
    );
    let out = tmp.path().join("sw");
    assert_eq!(cli(&["uniform-sweep", "--config", &cfg, "--output-dir", out.to_str().unwrap()]), 0);
    assert_eq!(read_csv(&out.join("sweep.csv")).1.len(), 9);
    assert_eq!(read_csv(&out.join("curve.csv")).1.len(), 3);
    let out = tmp.path().join("ap");
    assert_eq!(cli(&["ap-test", "--config", &cfg, "--output-dir", out.to_str().unwrap()]), 0);
    let (header, rows) = read_csv(&out.join("ap.csv"));
    assert_eq!(header, ["eps", "coupled", "limiting", "gap", "stderr"]);
    assert_eq!(rows.len(), 3);
}

#[test]
fn bad_input_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("malformed.json", r#"{"spectrum": {"kind": "dirichlet", "J": 8"#),
        ("fractional_n.json", r#"{"N": 2.5}"#),
        ("unknown_field.json", r#"{"colour": "blue"}"#),
        ("bad_eps.json", r#"{"eps": -1.0}"#),
        ("bad_variant.json", r#"{"nonlinearity": {"variant": "CUBIC", "params": {}}}"#),
    ];
    for (i, (name, body)) in cases.iter().enumerate() {
        let cfg = write(tmp.path(), name, body);
        let out = tmp.path().join(format!("out{i}"));
        let code = cli(&["weak-error", "--config", &cfg, "--output-dir", out.to_str().unwrap()]);
        assert_ne!(code, 0, "{name}");
        assert!(!out.exists(), "{name}");
    }
    let out = tmp.path().join("missing");
    assert_ne!(cli(&["simulate", "--config", "/nonexistent/c.json", "--output-dir", out.to_str().unwrap()]), 0);
    assert!(!out.exists());
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_ne!(cli(&["simulate", "--threads", "0", "--output-dir", out.to_str().unwrap()]), 0);
    assert!(!out.exists());
}

#[test]
fn binary_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bin");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_apspde"))
        .args(["invariant-test", "--output-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(out.join("invariant.csv").exists());
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_apspde")).arg("nope").output().unwrap();
    assert_eq!(status.status.code(), Some(2));
}
