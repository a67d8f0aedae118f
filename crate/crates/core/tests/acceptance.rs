//! One test per acceptance criterion. Each prints a single `PASS`/`FAIL`
//! line; run with `--nocapture` to see them. The mutex keeps the timed
//! criteria from sharing the thread pool with other tests.

use std::sync::Mutex;
use std::time::Instant;

use tworow::cell_solver::{solve_phi, Variant};
use tworow::geometry::CellConfig;
use tworow::harmonic_basis::BackgroundField;
use tworow::verify::*;

static SERIAL: Mutex<()> = Mutex::new(());

fn template() -> CellConfig {
    CellConfig::new(0.1, 0.1).unwrap()
}

fn x() -> BackgroundField {
    BackgroundField::linear(1.0, 0.0)
}

fn y() -> BackgroundField {
    BackgroundField::linear(0.0, 1.0)
}

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("{} criterion-{id:02} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

#[test]
fn c01_period_shift() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let r = check_period_shift(&template(), &y(), &Tolerances::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let measured = r.get("measured").unwrap();
    let err = (measured - 2.1).abs();
    report(1, "period-shift", err < 1e-8 && secs < 5.0, format!("shift={measured:.15} |shift-2.1|={err:.2e} time={secs:.2}s"));
}

#[test]
fn c02_gap_scaling() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let r = check_gap_scaling(&template(), &default_grid(), &[], &Tolerances::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let lo = r.get("eps_min_ratio").unwrap();
    let hi = r.get("eps_max_ratio").unwrap();
    let pass = lo > 0.0 && hi / lo <= 3.0 && secs < 60.0;
    report(2, "gap-scaling", pass, format!("(c_R-c_L)/sqrt(eps) in [{lo:.4}, {hi:.4}] spread={:.3} time={secs:.1}s", hi / lo));
}

#[test]
fn c03_flux_identity() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (label, h) in [("x", x()), ("y", y()), ("x+2y", BackgroundField::linear(1.0, 2.0))] {
        let r = check_identity(&template(), &h, &Tolerances::default()).unwrap();
        let e = r.get("relative_error").unwrap();
        worst = worst.max(e);
        parts.push(format!("{label}: lhs={:.12e} rhs={:.12e} rel={e:.1e}", r.get("lhs").unwrap(), r.get("rhs").unwrap()));
    }
    report(3, "flux-identity", worst < 1e-8, parts.join("; "));
}

#[test]
fn c04_vertical_gap_lens() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let r = check_asymptote_nh(&template(), &y(), &default_grid(), Variant::TwoRow, &Tolerances::default()).unwrap();
    let lambda = r.get("lambda").unwrap();
    let lead = r.get("lead_product").unwrap();
    let pass = r.pass && lambda == 2.0 && ((lead - 2.0) / 2.0).abs() <= 0.05;
    report(4, "asymptote-nh", pass, format!("lambda={lambda} delta*max|grad u|={lead:.5} max remainder={:.3} ({})", r.get("max_remainder").unwrap_or(f64::NAN), r.line()));
}

#[test]
fn c05_horizontal_gap_lens() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Tolerances::default();
    let a = check_asymptote_nv(&template(), &x(), &default_grid(), &t).unwrap();
    let b = check_asymptote_nv(&template(), &y(), &default_grid(), &t).unwrap();
    let lo = a.get("mu_min").unwrap();
    let hi = a.get("mu_max").unwrap();
    let lead = a.get("lead_ratio").unwrap();
    let pass = a.pass && b.pass && lo > 0.0 && hi / lo <= 3.0 && (lead - 1.0).abs() <= 0.10;
    report(5, "asymptote-nv", pass, format!("H=x mu0 in [{lo:.4}, {hi:.4}] lead={lead:.5}; H=y max|mu|/sqrt(eps)={:.2e}", b.get("mu_over_sqrt_eps").unwrap()));
}

#[test]
fn c06_rates() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let (_, fh, fv) = check_rates(&template(), &default_grid(), &default_grid(), &Tolerances::default()).unwrap();
    let pass = (fh.slope + 1.0).abs() <= 0.05 && (fv.slope + 0.5).abs() <= 0.05;
    report(6, "rates", pass, format!("slope_h={:.4} slope_v={:.4}", fh.slope, fv.slope));
}

#[test]
fn c07_decay() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = template();
    let r = check_decay(&cfg, &[x(), y()], &Tolerances::default()).unwrap();
    let bound = -std::f64::consts::PI / cfg.period() + 0.05;
    let slope = r.get("slope_max").unwrap();
    report(7, "decay", slope <= bound, format!("slope={slope:.4} bound={bound:.4}"));
}

#[test]
fn c08_reference_potential() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let r = check_max_principles(&template(), &default_grid(), &Tolerances::default()).unwrap();
    report(8, "max-principle", r.pass, r.line());
}

#[test]
fn c09_oracle() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let r = check_oracle(&template(), &x(), &[10, 20, 50], &Tolerances::default()).unwrap();
    let errs: Vec<f64> = r.rows.iter().map(|row| row.measured).collect();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let pass = monotone && errs.last().is_some_and(|e| *e < 1e-3);
    report(9, "oracle", pass, format!("rel errors M=10,20,50: {} monotone={monotone}", errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")));
}

#[test]
fn c10_hygiene() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let base = template();
    let mut sols = Vec::new();
    for &e in &default_grid() {
        sols.push(solve_two_row(&CellConfig::new(e, base.delta).unwrap(), &x()).unwrap());
    }
    for &d in &default_grid() {
        let c = CellConfig::new(base.eps, d).unwrap();
        sols.push(solve_two_row(&c, &y()).unwrap());
        sols.push(solve_variant(&c, &y(), Variant::SingleRow).unwrap());
    }
    sols.push(solve_two_row(&base, &BackgroundField::linear(1.0, 2.0)).unwrap());
    sols.push(solve_phi(&base).unwrap());
    let refs: Vec<_> = sols.iter().collect();
    let r = check_hygiene(&refs, &Tolerances::default()).unwrap();
    report(10, "hygiene", r.pass, format!("{} solutions: {}", sols.len(), r.line()));
}
