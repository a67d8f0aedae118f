//! End-to-end runs of the `tworow` binary and of the finite-array oracle.

use std::fs;
use std::path::Path;
use std::process::Command;

use tworow::cell_solver::{CellSolution, Field};
use tworow::geometry::{random_points, CellConfig, Point, StripRegion};
use tworow::harmonic_basis::BackgroundField;
use tworow::oracle::solve_truncated_oracle;
use tworow::verify::solve_two_row;

fn tworow(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tworow")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn dir_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_a_converged_solution() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = tworow(&["solve", "--eps", "0.1", "--delta", "0.1", "--H", "x+2y", "--out", dir_arg(dir.path())]);
    assert_eq!(code, 0, "{text}");
    assert!(text.starts_with("PASS"));
    let sol: CellSolution = serde_json::from_slice(&fs::read(dir.path().join("solution.json")).unwrap()).unwrap();
    assert!(sol.residual < 1e-8);
    assert!(dir.path().join("manifest.json").exists());
    let (u, _) = sol.eval(Point::new(0.0, 0.0)).unwrap();
    assert!(u.is_finite());
}

#[test]
fn verify_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = tworow(&["verify", "--suite", "period-shift,flux-identity", "--out", dir_arg(dir.path())]);
    assert_eq!(code, 0, "{text}");
    let csv = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("check,eps,delta,N,measured,expected,tol,pass,seconds"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|r| r.starts_with("period-shift,")).count(), 1);
    assert_eq!(rows.iter().filter(|r| r.starts_with("flux-identity,")).count(), 3);
    let (code, again) = tworow(&["report", "--out", dir_arg(dir.path())]);
    assert_eq!(code, 0);
    assert!(again.contains("period-shift"));
}

#[test]
fn sweep_rates_writes_fits() {
    let dir = tempfile::tempdir().unwrap();
    let (_, text) = tworow(&["sweep", "--claim", "rates", "--eps-grid", "0.1,0.03,0.01,0.003", "--delta-grid", "0.1,0.03,0.01,0.003", "--out", dir_arg(dir.path())]);
    let rates = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert!(rates.starts_with("fit,slope,intercept,residual,points"), "{text}");
    let slope = |name: &str| -> f64 {
        let line = rates.lines().find(|l| l.starts_with(name)).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!((slope("nh_vs_delta") + 1.0).abs() < 0.1);
    assert!((slope("nv_vs_eps") + 0.5).abs() < 0.1);
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 8);
}

#[test]
fn failing_check_and_bad_input_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = tworow(&["verify", "--suite", "period-shift", "--tol-shift", "1e-300", "--out", dir_arg(dir.path())]);
    assert_eq!(code, 3, "{text}");
    assert!(text.contains("FAIL"));
    assert_eq!(tworow(&["solve", "--eps", "0", "--out", dir_arg(dir.path())]).0, 2);
    assert_eq!(tworow(&["solve", "--H", "z", "--out", dir_arg(dir.path())]).0, 2);
    assert_eq!(tworow(&["verify", "--suite", "everything", "--out", dir_arg(dir.path())]).0, 2);
    assert_eq!(tworow(&["report", "--out", dir_arg(&dir.path().join("missing"))]).0, 1);
    assert_eq!(tworow(&["--help"]).0, 0);
}

#[test]
fn config_file_drives_a_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("eps = 0.2\ndelta = 0.05\nH = y\nout = {}\n", dir.path().display())).unwrap();
    let (code, text) = tworow(&["solve", "--config", dir_arg(&cfg)]);
    assert_eq!(code, 0, "{text}");
    let sol: CellSolution = serde_json::from_slice(&fs::read(dir.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!((sol.cfg().eps, sol.cfg().delta), (0.2, 0.05));
}

/// The finite stack approaches the periodic solution like `1/M`; removing
/// that term by extrapolation leaves a much smaller discrepancy.
#[test]
fn truncated_array_extrapolates_to_periodic_solution() {
    let cfg = CellConfig::new(0.1, 0.1).unwrap();
    let h = BackgroundField::linear(1.0, 0.0);
    let sol = solve_two_row(&cfg, &h).unwrap();
    let pts = random_points(StripRegion::OmegaM(2.5), &cfg, 20, 0.5, 11).unwrap();
    let a = solve_truncated_oracle(&cfg, &h, 10).unwrap();
    let b = solve_truncated_oracle(&cfg, &h, 20).unwrap();
    let (mut ea, mut eb, mut ex, mut scale) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for p in &pts {
        let g = sol.eval(*p).unwrap().1;
        let ga = a.eval(*p).unwrap().1;
        let gb = b.eval(*p).unwrap().1;
        scale = scale.max(g[0].hypot(g[1]));
        ea = ea.max((ga[0] - g[0]).hypot(ga[1] - g[1]));
        eb = eb.max((gb[0] - g[0]).hypot(gb[1] - g[1]));
        ex = ex.max((2.0 * gb[0] - ga[0] - g[0]).hypot(2.0 * gb[1] - ga[1] - g[1]));
    }
    let (ea, eb, ex) = (ea / scale, eb / scale, ex / scale);
    assert!(eb < ea);
    assert!((ea / eb - 2.0).abs() < 0.3, "ratio {}", ea / eb);
    assert!(ex < 0.2 * eb, "extrapolated {ex} vs {eb}");
}
