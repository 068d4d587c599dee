use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rkhs_ratio::estimator::RatioModel;
use rkhs_ratio::experiment::ExperimentReport;
use rkhs_ratio::io::{load_samples, read_capacity_csv, read_replications_csv};
use rkhs_ratio::kernel::MeasureTag;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rkhs-ratio"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_tiny(dir: &Path) -> (String, String) {
    let xp = dir.join("xp.csv");
    let xq = dir.join("xq.csv");
    fs::write(&xp, "x0\n-1.0\n0.5\n1.2\n2.0\n3.3\n").unwrap();
    fs::write(&xq, "x0\n1.8\n2.1\n2.4\n").unwrap();
    (path(&xp).into(), path(&xq).into())
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(out.stderr.trim_ascii()).unwrap()
}

#[test]
fn fit_writes_model_with_one_coefficient_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, xq) = write_tiny(dir.path());
    let model = dir.path().join("model.json");
    let out = bin(&[
        "fit",
        "--xp",
        &xp,
        "--xq",
        &xq,
        "--lambda",
        "0.3",
        "--k",
        "3",
        "--out",
        path(&model),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = RatioModel::from_json(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m.alpha.len(), 5);
    assert_eq!(m.values_at_xp.len(), 5);
}

#[test]
fn fit_without_lambda_uses_quasi_optimality() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, xq) = write_tiny(dir.path());
    let model = dir.path().join("m.json");
    let out = bin(&[
        "fit",
        "--xp",
        &xp,
        "--xq",
        &xq,
        "--k",
        "2",
        "--out",
        path(&model),
    ]);
    assert!(out.status.success());
    let m = RatioModel::from_json(&fs::read_to_string(&model).unwrap()).unwrap();
    let l = m.scheme.lambda();
    assert!((0.1 - 1e-12..=0.9).contains(&l));
}

#[test]
fn fit_rejects_empty_p_sample() {
    let dir = tempfile::tempdir().unwrap();
    let (_, xq) = write_tiny(dir.path());
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x0\n").unwrap();
    let out = bin(&[
        "fit",
        "--xp",
        path(&empty),
        "--xq",
        &xq,
        "--lambda",
        "0.5",
        "--out",
        "unused.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "validation");
}

#[test]
fn fit_rejects_zero_lambda_naming_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, xq) = write_tiny(dir.path());
    let out = bin(&[
        "fit",
        "--xp",
        &xp,
        "--xq",
        &xq,
        "--lambda",
        "0",
        "--out",
        "unused.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"]
        .as_str()
        .unwrap()
        .contains("--lambda"));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let out = bin(&[
        "fit",
        "--xp",
        "/nonexistent/xp.csv",
        "--xq",
        "/nonexistent/xq.csv",
        "--lambda",
        "1",
        "--out",
        "x.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn evaluate_matches_library_model() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, xq) = write_tiny(dir.path());
    let model = dir.path().join("model.json");
    assert!(bin(&[
        "fit",
        "--xp",
        &xp,
        "--xq",
        &xq,
        "--lambda",
        "0.2",
        "--out",
        path(&model)
    ])
    .status
    .success());
    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "x0\n-2\n0\n2\n6\n").unwrap();
    let values = dir.path().join("beta.csv");
    let out = bin(&[
        "evaluate",
        "--model",
        path(&model),
        "--points",
        path(&pts),
        "--out",
        path(&values),
    ]);
    assert!(out.status.success());
    let m = RatioModel::from_json(&fs::read_to_string(&model).unwrap()).unwrap();
    let mut rdr = csv::Reader::from_path(&values).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["x0", "beta"]);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let b: f64 = rec[1].parse().unwrap();
        assert_eq!(b, m.evaluate(&[x]).unwrap());
    }
}

#[test]
fn simulate_defaults_write_all_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["simulate", "--out-dir", path(dir.path())]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("median_msd"));
    let rows = read_replications_csv(fs::File::open(dir.path().join("replications.csv")).unwrap())
        .unwrap();
    assert_eq!(rows.len(), 3 * 5 * 20);
    let report: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.cells.len(), 15);
    for row in &rows {
        let cell = report.cell(row.mu_q, row.k).unwrap();
        assert_eq!(cell.replications[row.replication].msd, row.msd);
    }
    let stats = fs::read_to_string(dir.path().join("box_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 16);
}

#[test]
fn simulate_single_replication_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(
        bin(&["simulate", "--replications", "1", "--out-dir", path(&a)])
            .status
            .success()
    );
    let rows = read_replications_csv(fs::File::open(a.join("replications.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 15);

    // A config file is overridden by flags.
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"replications": 4, "mu_q_list": [3.0], "k_list": [1, 2]}"#,
    )
    .unwrap();
    let b = dir.path().join("b");
    assert!(bin(&[
        "simulate",
        "--config",
        path(&cfg),
        "--replications",
        "2",
        "--out-dir",
        path(&b)
    ])
    .status
    .success());
    let rows = read_replications_csv(fs::File::open(b.join("replications.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.mu_q == 3.0));
}

#[test]
fn capacity_one_row_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, _) = write_tiny(dir.path());
    let csv_out = dir.path().join("cap.csv");
    let out = bin(&[
        "capacity",
        "--xp",
        &xp,
        "--lambdas",
        "0.01,0.1,0.5,0.9",
        "--out",
        path(&csv_out),
    ]);
    assert!(out.status.success());
    let profile = read_capacity_csv(fs::File::open(&csv_out).unwrap()).unwrap();
    assert_eq!(profile.lambdas.len(), 4);
    assert!(profile.n_eff.windows(2).all(|w| w[1] <= w[0]));
    assert!(profile
        .n_eff
        .iter()
        .zip(&profile.n_inf)
        .all(|(a, b)| b >= a));
}

#[test]
fn capacity_json_matches_stdout_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, _) = write_tiny(dir.path());
    let out_path = dir.path().join("cap.json");
    let out = bin(&[
        "capacity",
        "--xp",
        &xp,
        "--format",
        "json",
        "--out",
        path(&out_path),
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(out.stdout.trim_ascii()).unwrap();
    let file: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(summary["rows"], 10);
    assert!(summary["lambda_star"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["lambda_star"], file["lambda_star"]);
}

#[test]
fn check_schemes_passes_for_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("checks.json");
    let out = bin(&["check-schemes", "--out", path(&report)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 5 * 10);
}

#[test]
fn rates_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("rates.json");
    let out = bin(&[
        "rates",
        "--n-list",
        "20,40",
        "--replications",
        "2",
        "--out",
        path(&json),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
    let csv_out = dir.path().join("rates.csv");
    assert!(bin(&[
        "rates",
        "--n-list",
        "20",
        "--replications",
        "1",
        "--format",
        "csv",
        "--out",
        path(&csv_out)
    ])
    .status
    .success());
    assert_eq!(fs::read_to_string(&csv_out).unwrap().lines().count(), 2);
}

#[test]
fn sample_files_round_trip_through_loaders() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, _) = write_tiny(dir.path());
    let s = load_samples(Path::new(&xp), MeasureTag::P).unwrap();
    assert_eq!(s.len(), 5);
    let json = dir.path().join("xp.json");
    rkhs_ratio::io::save_samples_json(&json, &s).unwrap();
    assert_eq!(load_samples(&json, MeasureTag::P).unwrap().points, s.points);
}

#[test]
fn help_lists_study_defaults() {
    let out = bin(&["simulate", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in [
        "default: 100",
        "default: 2,3,4",
        "default: 1,2,3,5,10",
        "default: 20",
        "default: 0.9",
        "(1/9)^(1/9)",
        "default: 2023",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
    let bad = bin(&["simulate", "--bogus"]);
    assert_eq!(bad.status.code(), Some(2));
}
