use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use secdetect::linalg_frames::random_stiefel;
use secdetect::matrix_file::write_matrix;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_secdetect"))
}

fn scenario(tau: Value) -> Value {
    json!({"alpha": 0.3, "gamma": 1.2, "p10": 0.4, "p20": 0.1, "p11": 0.2, "p21": 0.3,
           "sigma2": 1.0, "tau": tau})
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

/// Runs a command that must succeed and returns its run directory.
fn run_ok(args: &[&str], config: &Path, out: &Path) -> PathBuf {
    let output = run(args, config, out);
    assert!(
        output.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    PathBuf::from(String::from_utf8(output.stdout).unwrap().trim())
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn known_config(tau: Value) -> Value {
    json!({
        "version": 1, "mode": "known", "n": 16, "m": 4, "nodes": 6,
        "signal": {"random": {"norm": 1.5}},
        "scenario": scenario(tau),
        "simulation": {"trials": 1500, "thresholds": ["-inf", -1, 0, 1, "inf"]},
        "seed": 5
    })
}

#[test]
fn known_unconstrained_keeps_full_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!("inf")));
    let dir = run_ok(&["design"], &cfg, tmp.path());
    let r = report(&dir, "design_report.json");
    assert_eq!(f(&r["design"]["theta"]), 0.0);
    assert!((f(&r["design"]["achieved_delta"]) - 2.25).abs() < 1e-12);
    assert_eq!(r["design"]["budget_delta"], json!("inf"));
}

#[test]
fn sparse_simplex_worst_case() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"version": 1, "mode": "sparse", "n": 4, "m": 3, "k": 2,
                "scenario": scenario(json!("inf"))}),
    );
    let dir = run_ok(&["design"], &cfg, tmp.path());
    let r = report(&dir, "design_report.json");
    assert_eq!(f(&r["design"]["theta"]), 0.0);
    assert!((f(&r["design"]["achieved_delta"]) - 0.5).abs() < 1e-12);
    assert!((f(&r["evaluation"]["capture"]) - 0.5).abs() < 1e-12);
    assert_eq!(r["design"]["exact"], json!(true));
}

#[test]
fn oversized_subspace_reports_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"version": 1, "mode": "subspace-free", "n": 10, "m": 3, "k": 4,
                "scenario": scenario(json!(0.2))}),
    );
    let dir = run_ok(&["design"], &cfg, tmp.path());
    let r = report(&dir, "design_report.json");
    assert!(f(&r["design"]["achieved_delta"]).abs() < 1e-12);
    let diagnostics = r["design"]["diagnostics"].as_array().unwrap();
    assert!(diagnostics
        .iter()
        .any(|d| d.as_str().unwrap().contains("exceeds m")));
}

#[test]
fn evaluate_reproduces_design_report() {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        known_config(json!(0.3)),
        json!({"version": 1, "mode": "subspace-free", "n": 12, "m": 4, "k": 2,
               "scenario": scenario(json!(0.2)), "seed": 9}),
        json!({"version": 1, "mode": "subspace-fixed", "n": 12, "m": 4, "k": 3,
               "basis": {"random": {}}, "scenario": scenario(json!(0.2)), "seed": 9}),
        json!({"version": 1, "mode": "sparse", "n": 6, "m": 3, "k": 2,
               "scenario": scenario(json!(0.1)), "seed": 2}),
        json!({"version": 1, "mode": "sparse", "n": 8, "m": 4, "k": 1,
               "scenario": scenario(json!(0.1)), "seed": 2}),
    ];
    for (i, config) in configs.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.json"), config);
        let dir = run_ok(&["design"], &cfg, &tmp.path().join("runs"));
        let designed = report(&dir, "design_report.json")["evaluation"].clone();
        assert_eq!(designed["constraint_ok"], json!(true), "config {i}");
        let matrix = dir.join("matrix.txt");
        let output = bin()
            .arg("evaluate")
            .arg("--config")
            .arg(dir.join("config.resolved.json"))
            .arg("--matrix")
            .arg(&matrix)
            .arg("--out")
            .arg(tmp.path().join("eval"))
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        let eval_dir = PathBuf::from(String::from_utf8(output.stdout).unwrap().trim());
        let evaluated = report(&eval_dir, "evaluate_report.json")["evaluation"].clone();
        for key in [
            "raw_capture",
            "capture",
            "d_fc",
            "d_ev",
            "oracle_d_fc",
            "oracle_d_ev",
        ] {
            let (a, b) = (f(&designed[key]), f(&evaluated[key]));
            assert!(
                (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                "config {i} {key}: {a} vs {b}"
            );
        }
        assert_eq!(designed["constraint_ok"], evaluated["constraint_ok"]);
        assert_eq!(designed["worst_support"], evaluated["worst_support"]);
        // Closed form and exact-moment oracle agree on the emitted matrix.
        for (closed, oracle) in [("d_fc", "oracle_d_fc"), ("d_ev", "oracle_d_ev")] {
            let (a, b) = (f(&evaluated[closed]), f(&evaluated[oracle]));
            assert!(
                (a - b).abs() <= 1e-8 * b.abs().max(1e-12),
                "config {i} {closed}"
            );
        }
    }
}

#[test]
fn evaluate_flags_violation_on_random_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!(0.01)));
    let matrix = tmp.path().join("random.txt");
    write_matrix(&matrix, random_stiefel(4, 16, 3).unwrap().as_matrix()).unwrap();
    let output = bin()
        .args(["evaluate", "--config"])
        .arg(&cfg)
        .arg("--matrix")
        .arg(&matrix)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let dir = PathBuf::from(String::from_utf8(output.stdout).unwrap().trim());
    let r = report(&dir, "evaluate_report.json");
    assert!(f(&r["evaluation"]["d_ev"]) > 0.01);
    assert_eq!(r["evaluation"]["constraint_ok"], json!(false));
}

#[test]
fn corrupted_matrix_names_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!(0.3)));
    let matrix = tmp.path().join("bad.txt");
    std::fs::write(&matrix, "# matrix 2 3\n1,2,3\n4,5\n").unwrap();
    let output = bin()
        .args(["evaluate", "--config"])
        .arg(&cfg)
        .arg("--matrix")
        .arg(&matrix)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let record: Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(record["error"], json!("config"));
    assert!(record["message"].as_str().unwrap().contains("line 3"));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = known_config(json!(0.3));
    config["colour"] = json!("blue");
    let cfg = write_config(tmp.path(), "c.json", &config);
    let output = run(&["design"], &cfg, tmp.path());
    assert_eq!(output.status.code(), Some(2));
    let record: Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(record["exit_code"], json!(2));
    assert!(record["message"].as_str().unwrap().contains("colour"));
}

#[test]
fn design_and_simulate_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!(0.3)));
    let mut outputs = Vec::new();
    for (out, threads) in [("a", "1"), ("b", "4")] {
        let root = tmp.path().join(out);
        let d1 = run_ok(&["design", "--threads", threads], &cfg, &root);
        let d2 = run_ok(&["simulate", "--threads", threads], &cfg, &root);
        assert_eq!(d1, d2);
        outputs.push((
            std::fs::read(d1.join("matrix.txt")).unwrap(),
            std::fs::read(d1.join("roc.csv")).unwrap(),
            d1.file_name().unwrap().to_owned(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn artifacts_are_not_silently_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!(0.3)));
    let dir = run_ok(&["design"], &cfg, tmp.path());
    run_ok(&["design"], &cfg, tmp.path());
    std::fs::write(dir.join("matrix.txt"), "# matrix 1 1\n1\n").unwrap();
    let output = run(&["design"], &cfg, tmp.path());
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn simulate_extreme_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!(0.3)));
    let dir = run_ok(&["simulate"], &cfg, tmp.path());
    let csv = std::fs::read_to_string(dir.join("roc.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "threshold,p_fa_fc,p_d_fc,se_fa_fc,se_d_fc,p_fa_ev,p_d_ev,se_fa_ev,se_d_ev"
    );
    assert_eq!(lines[1], "-inf,1,1,0,0,1,1,0,0");
    assert_eq!(lines[lines.len() - 1], "inf,0,0,0,0,0,0,0,0");
}

fn sweep_rows(dir: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(dir.join("sweep.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn tau_sweep_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!(0.3)));
    let dir = run_ok(
        &[
            "sweep",
            "--param",
            "tau",
            "--values",
            "0.01,0.05,0.1,0.3,1,3,inf",
        ],
        &cfg,
        tmp.path(),
    );
    let rows = sweep_rows(&dir);
    assert_eq!(rows.len(), 7);
    let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    for w in rows.windows(2) {
        assert!(num(&w[1], 2) <= num(&w[0], 2), "theta must not increase");
        assert!(num(&w[1], 3) >= num(&w[0], 3), "capture must not decrease");
        assert!(num(&w[1], 4) >= num(&w[0], 4), "d_fc must not decrease");
    }
    assert!(rows.iter().all(|r| r[6] == "true" && r[7].is_empty()));
}

#[test]
fn single_point_sweep_matches_design() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!(0.3)));
    let design = report(&run_ok(&["design"], &cfg, tmp.path()), "design_report.json");
    let dir = run_ok(
        &["sweep", "--param", "tau", "--values", "0.3"],
        &cfg,
        tmp.path(),
    );
    let row = &sweep_rows(&dir)[0];
    assert_eq!(
        row[2].parse::<f64>().unwrap(),
        f(&design["design"]["theta"])
    );
    assert_eq!(
        row[3].parse::<f64>().unwrap(),
        f(&design["evaluation"]["capture"])
    );
    assert_eq!(
        row[4].parse::<f64>().unwrap(),
        f(&design["evaluation"]["d_fc"])
    );
    assert_eq!(
        row[5].parse::<f64>().unwrap(),
        f(&design["evaluation"]["d_ev"])
    );
}

#[test]
fn gamma_sweep_and_point_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &known_config(json!(0.3)));
    let dir = run_ok(
        &["sweep", "--param", "gamma", "--values", "0,0.5,-1"],
        &cfg,
        tmp.path(),
    );
    let rows = sweep_rows(&dir);
    let capture: f64 = rows[0][3].parse().unwrap();
    let d_fc: f64 = rows[0][4].parse().unwrap();
    assert!(
        (d_fc - capture).abs() < 1e-12,
        "sigma2 = 1, so d_fc = capture"
    );
    assert!(rows[1][7].is_empty());
    assert!(
        rows[2][7].starts_with("config"),
        "negative gamma is rejected: {:?}",
        rows[2]
    );
    assert!(rows[2][2].is_empty());
}
