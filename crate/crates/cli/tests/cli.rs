use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use funlasso::io::{CsvMatrix, KeyValue};
use funlasso::plot::polyline_points;

fn funlasso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funlasso"))
        .args(["--threads", "1", "--no-timing"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = funlasso(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn csv(path: &str) -> CsvMatrix {
    CsvMatrix::read(Path::new(path), false).unwrap()
}

fn simulate(dir: &Path, body: &str) {
    fs::write(dir.join("scen.kv"), body).unwrap();
    ok(&["simulate", "--config", &p(dir, "scen.kv"), "--out", &p(dir, "sim")]);
}

const MINIMAL: &str = "N = 10\nI = 5\nI0 = 2\ngrid_points = 16\nseed = 3\n";

#[test]
fn simulate_writes_consistent_files() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), MINIMAL);
    let y = CsvMatrix::read(&d.path().join("sim/Y.csv"), true).unwrap();
    let x = csv(&p(d.path(), "sim/X.csv"));
    let b = CsvMatrix::read(&d.path().join("sim/beta_true.csv"), true).unwrap();
    assert_eq!(y.data.shape(), (10, 16));
    assert_eq!(y.numeric_header().unwrap().len(), 16);
    assert_eq!(x.data.shape(), (10, 5));
    assert_eq!(b.data.shape(), (2, 16));
    let meta = KeyValue::read(&d.path().join("sim/meta")).unwrap();
    assert_eq!(meta.get("support_true"), Some("0,1"));
    assert_eq!(meta.get("threads"), Some("1"));
}

#[test]
fn simulate_is_byte_identical_for_a_fixed_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), MINIMAL);
    simulate(b.path(), MINIMAL);
    for f in ["Y.csv", "X.csv", "beta_true.csv", "meta"] {
        assert_eq!(
            fs::read(a.path().join("sim").join(f)).unwrap(),
            fs::read(b.path().join("sim").join(f)).unwrap(),
            "{f}"
        );
    }
    let out = funlasso(&[
        "simulate", "--config", &p(a.path(), "scen.kv"), "--out", &p(a.path(), "other"), "--seed", "4",
    ]);
    assert!(out.status.success());
    assert_ne!(
        fs::read(a.path().join("sim/Y.csv")).unwrap(),
        fs::read(a.path().join("other/Y.csv")).unwrap()
    );
}

#[test]
fn missing_key_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.kv"), "N = 10\nI = 5\ngrid_points = 16\n").unwrap();
    let out = funlasso(&["simulate", "--config", &p(d.path(), "bad.kv"), "--out", &p(d.path(), "o")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("I0"));
}

#[test]
fn unreadable_config_is_a_runtime_error() {
    let d = tempfile::tempdir().unwrap();
    let out = funlasso(&["simulate", "--config", &p(d.path(), "absent.kv"), "--out", &p(d.path(), "o")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn lambda_zero_matches_least_squares() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "N = 30\nI = 4\nI0 = 2\ngrid_points = 12\nseed = 5\n");
    ok(&[
        "fit", "--y", &p(d.path(), "sim/Y.csv"), "--x", &p(d.path(), "sim/X.csv"), "--preprocess", "none",
        "--lambda", "0", "--out", &p(d.path(), "fit"),
    ]);
    let y = CsvMatrix::read(&d.path().join("sim/Y.csv"), true).unwrap().data;
    let x = csv(&p(d.path(), "sim/X.csv")).data;
    let ls = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
    let b = CsvMatrix::read(&d.path().join("fit/beta_hat.csv"), true).unwrap().data;
    assert!((&b - &ls).norm() / ls.norm() < 1e-8);
}

#[test]
fn afsl_meta_has_both_blocks() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "N = 40\nI = 15\nI0 = 3\ngrid_points = 20\nseed = 6\n");
    ok(&[
        "fit", "--y", &p(d.path(), "sim/Y.csv"), "--x", &p(d.path(), "sim/X.csv"), "--mode", "afsl",
        "--out", &p(d.path(), "fit"),
    ]);
    let meta = KeyValue::read(&d.path().join("fit/fit_meta")).unwrap();
    for block in ["fsl", "afsl"] {
        for key in ["lambda", "df", "max_active_residual", "max_inactive_slack_violation", "iterations", "seconds"] {
            assert!(meta.get(&format!("{block}.{key}")).is_some(), "{block}.{key}");
        }
    }
    assert_eq!(meta.get("fsl.seconds"), Some("0"));
    assert!(d.path().join("fit/path.csv").exists());
    assert!(d.path().join("fit/beta_hat_fsl.csv").exists());
}

#[test]
fn ebic_column_matches_recomputation() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "N = 50\nI = 25\nI0 = 3\ngrid_points = 20\nseed = 8\n");
    ok(&[
        "fit", "--y", &p(d.path(), "sim/Y.csv"), "--x", &p(d.path(), "sim/X.csv"), "--criterion", "ebic",
        "--ebic-gamma", "0.2", "--out", &p(d.path(), "fit"),
    ]);
    let path = csv(&p(d.path(), "fit/path.csv"));
    let h = path.header.unwrap();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (n, i) = (50.0f64, 25.0f64);
    for r in 0..path.data.nrows() {
        let rss = path.data[(r, col("rss"))];
        let df = path.data[(r, col("df"))];
        let expect = n * (rss / n).ln() + df * n.ln() + 2.0 * 0.2 * df * i.ln();
        assert!((path.data[(r, col("ebic"))] - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }
    let meta = KeyValue::read(&d.path().join("fit/fit_meta")).unwrap();
    assert_eq!(meta.get("tuning"), Some("ebic"));
}

#[test]
fn mismatched_rows_fail() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), MINIMAL);
    let x = csv(&p(d.path(), "sim/X.csv"));
    let short = CsvMatrix::new(x.header.clone(), x.data.rows(0, 7).into_owned());
    short.write(&d.path().join("short.csv")).unwrap();
    let out = funlasso(&[
        "fit", "--y", &p(d.path(), "sim/Y.csv"), "--x", &p(d.path(), "short.csv"), "--lambda", "1",
        "--out", &p(d.path(), "fit"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rows"));
}

#[test]
fn plot_exact_fit_coincides_with_truth() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "N = 30\nI = 5\nI0 = 2\ngrid_points = 15\nseed = 2\nnoise_free = true\n");
    ok(&[
        "fit", "--y", &p(d.path(), "sim/Y.csv"), "--x", &p(d.path(), "sim/X.csv"), "--preprocess", "none",
        "--lambda", "0", "--out", &p(d.path(), "fit"),
    ]);
    ok(&[
        "plot", "--afsl", &p(d.path(), "fit/beta_hat.csv"), "--truth", &p(d.path(), "sim/beta_true.csv"),
        "--index", "0,1,4", "--out", &p(d.path(), "plots"),
    ]);
    let svg = fs::read_to_string(d.path().join("plots/beta_0.svg")).unwrap();
    assert_eq!(polyline_points(&svg, "truth"), polyline_points(&svg, "afsl"));
    // Row 4 is outside the true support and fitted as zero.
    let svg = fs::read_to_string(d.path().join("plots/beta_4.svg")).unwrap();
    let flat = polyline_points(&svg, "truth").unwrap();
    assert!(flat.iter().all(|q| q.1 == flat[0].1));

    ok(&[
        "plot", "--afsl", &p(d.path(), "fit/beta_hat.csv"), "--truth", &p(d.path(), "sim/beta_true.csv"),
        "--index", "0,1,4", "--out", &p(d.path(), "again"),
    ]);
    for f in ["beta_0.svg", "beta_1.svg", "beta_4.svg"] {
        assert_eq!(
            fs::read(d.path().join("plots").join(f)).unwrap(),
            fs::read(d.path().join("again").join(f)).unwrap()
        );
    }
}

#[test]
fn plot_rejects_unknown_index() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), MINIMAL);
    let out = funlasso(&[
        "plot", "--truth", &p(d.path(), "sim/beta_true.csv"), "--index", "7", "--out", &p(d.path(), "plots"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("index 7"));
}

#[test]
fn smooth_bench_and_diagnose_write_their_files() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "N = 40\nI = 12\nI0 = 2\ngrid_points = 20\nseed = 1\nreplications = 2\nn_basis = 15\n");
    ok(&["smooth", "--y", &p(d.path(), "sim/Y.csv"), "--config", &p(d.path(), "scen.kv"), "--out", &p(d.path(), "sm")]);
    for f in ["coeffs.csv", "scores.csv", "basis_bspline.txt", "basis_fpc.txt", "smooth_meta"] {
        assert!(d.path().join("sm").join(f).exists(), "{f}");
    }
    ok(&["bench", "--config", &p(d.path(), "scen.kv"), "--out", &p(d.path(), "bench")]);
    let summary = fs::read_to_string(d.path().join("bench/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(d.path().join("bench/campaign.csv").exists());
    assert!(d.path().join("bench/diagnostics.csv").exists());
    ok(&[
        "diagnose", "--x", &p(d.path(), "sim/X.csv"), "--beta-true", &p(d.path(), "sim/beta_true.csv"),
        "--out", &p(d.path(), "diag.kv"),
    ]);
    let kv = KeyValue::read(&d.path().join("diag.kv")).unwrap();
    assert!(kv.get("irrepresentable_phi").is_some());
}

#[test]
fn basis_file_input_round_trips() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "N = 40\nI = 8\nI0 = 2\ngrid_points = 20\nseed = 12\n");
    ok(&["smooth", "--y", &p(d.path(), "sim/Y.csv"), "--out", &p(d.path(), "sm")]);
    // Fit the smoothed coefficients directly in the B-spline basis.
    ok(&[
        "fit", "--y", &p(d.path(), "sm/coeffs.csv"), "--x", &p(d.path(), "sim/X.csv"),
        "--basis", &p(d.path(), "sm/basis_bspline.txt"), "--lambda", "0", "--out", &p(d.path(), "fit"),
    ]);
    let meta = KeyValue::read(&d.path().join("fit/fit_meta")).unwrap();
    assert_eq!(meta.get("basis"), Some("bspline"));
    let c = csv(&p(d.path(), "sm/coeffs.csv")).data;
    let x = csv(&p(d.path(), "sim/X.csv")).data;
    let ls = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &c));
    let got = csv(&p(d.path(), "fit/beta_hat_coeffs.csv")).data;
    assert!((&got - &ls).norm() / ls.norm() < 1e-8);
}
