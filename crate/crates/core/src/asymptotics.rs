//! Closed-form gap objects: image points, the explicit monopole pairs and
//! their lattice sums, the lens fields `phi_h` and `phi_v`, the shape
//! function `S`, and the coefficients of the gradient asymptotes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cell_solver::{shift_constant, CellSolution, Field};
use crate::error::{Error, Result};
use crate::geometry::{contains, CellConfig, Point, StripRegion};
use crate::harmonic_basis::{eval_background, BackgroundField, PeriodicKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Points `anchor +- p` on the gap axis; `p = sqrt(g + g^2/4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePair {
    pub gap: f64,
    pub p_exact: f64,
    pub axis: Axis,
    pub anchor: Point,
}

impl ImagePair {
    pub fn points(&self) -> (Point, Point) {
        let p = self.p_exact;
        match self.axis {
            Axis::Horizontal => (Point::new(self.anchor.x - p, self.anchor.y), Point::new(self.anchor.x + p, self.anchor.y)),
            Axis::Vertical => (Point::new(self.anchor.x, self.anchor.y - p), Point::new(self.anchor.x, self.anchor.y + p)),
        }
    }

    /// Bipolar radius `acosh(1 + g/2)` of both unit circles.
    pub fn xi0(&self) -> f64 {
        (1.0 + self.gap / 2.0).acosh()
    }
}

pub fn image_point(gap: f64) -> Result<ImagePair> {
    if !(gap > 0.0) || !gap.is_finite() {
        return Err(Error::Domain(format!("gap must be positive, got {gap}")));
    }
    Ok(ImagePair { gap, p_exact: (gap + gap * gap / 4.0).sqrt(), axis: Axis::Horizontal, anchor: Point::new(0.0, 0.0) })
}

/// Pair for the vertical gap between `R0` and `R1`.
pub fn vertical_pair(cfg: &CellConfig) -> ImagePair {
    ImagePair { axis: Axis::Vertical, anchor: Point::new(cfg.xc(), cfg.half_height()), ..image_point(cfg.delta).expect("delta validated") }
}

/// `c * (log|z - a| - log|z - b|)` with gradient.
fn log_pair(pt: Point, a: Point, b: Point, c: f64) -> Result<(f64, [f64; 2])> {
    let da = pt - a;
    let db = pt - b;
    let ra = da.x * da.x + da.y * da.y;
    let rb = db.x * db.x + db.y * db.y;
    if ra == 0.0 || rb == 0.0 {
        return Err(Error::Domain("evaluation at an image point".into()));
    }
    let v = 0.5 * c * (ra.ln() - rb.ln());
    Ok((v, [c * (da.x / ra - db.x / rb), c * (da.y / ra - db.y / rb)]))
}

/// `phi_n = (log|x - (-p, nL)| - log|x - (p, nL)|) / (2 pi)`.
pub fn phi_n(pt: Point, n: i64, cfg: &CellConfig) -> Result<(f64, [f64; 2])> {
    let p = image_point(cfg.eps)?.p_exact;
    let y = n as f64 * cfg.period();
    log_pair(pt, Point::new(-p, y), Point::new(p, y), 1.0 / (2.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TildePhi {
    /// Symmetric partial sum over `|n| <= N`.
    pub partial: f64,
    /// Same with cutoff `N/2`.
    pub half: f64,
    /// Two-step Richardson value from the cutoffs `N/4`, `N/2`, `N`.
    pub accelerated: f64,
}

impl TildePhi {
    pub fn cauchy(&self) -> f64 {
        (self.partial - self.half).abs()
    }
}

/// Symmetric partial sums of `phi_n`.
pub fn tilde_phi(pt: Point, cfg: &CellConfig, n_cut: usize) -> Result<TildePhi> {
    let n_cut = (n_cut.max(4) / 4 * 4) as i64;
    let (half, quarter) = (n_cut / 2, n_cut / 4);
    let mut s = phi_n(pt, 0, cfg)?.0;
    let (mut s2, mut s4) = (s, s);
    for n in 1..=n_cut {
        s += phi_n(pt, n, cfg)?.0 + phi_n(pt, -n, cfg)?.0;
        if n == quarter {
            s4 = s;
        }
        if n == half {
            s2 = s;
        }
    }
    // The paired terms fall off like 1/n^2, so the tail is a series in 1/N.
    let r1 = 2.0 * s - s2;
    let r0 = 2.0 * s2 - s4;
    Ok(TildePhi { partial: s, half: s2, accelerated: (4.0 * r1 - r0) / 3.0 })
}

/// Limit of the partial sums in closed form,
/// `(log|sinh(pi (z+p)/L)| - log|sinh(pi (z-p)/L)|) / (2 pi)`.
pub fn tilde_phi_closed(pt: Point, cfg: &CellConfig) -> Result<(f64, [f64; 2])> {
    let p = image_point(cfg.eps)?.p_exact;
    let k = PeriodicKernel::new(cfg.period());
    let z = pt.z();
    let (a, da) = k.log_sinh(z + p)?;
    let (b, db) = k.log_sinh(z - p)?;
    let c = 1.0 / (2.0 * PI);
    let d = (da - db) * c;
    Ok(((a.re - b.re) * c, [d.re, -d.im]))
}

/// `(tilde phi(eps/2, 0) - tilde phi(-eps/2, 0)) / (phi|R0 - phi|L0)`.
/// With `n_cut = None` the numerator uses the closed form.
pub fn alpha_coefficient(cfg: &CellConfig, sol_phi: &CellSolution, n_cut: Option<usize>) -> Result<f64> {
    let a = Point::new(cfg.eps / 2.0, 0.0);
    let b = Point::new(-cfg.eps / 2.0, 0.0);
    let num = match n_cut {
        None => tilde_phi_closed(a, cfg)?.0 - tilde_phi_closed(b, cfg)?.0,
        Some(n) => tilde_phi(a, cfg, n)?.accelerated - tilde_phi(b, cfg, n)?.accelerated,
    };
    let den = sol_phi.c_r() - sol_phi.c_l();
    if !(den.abs() > 1e-300) {
        return Err(Error::Domain("degenerate potential difference of phi".into()));
    }
    Ok(num / den)
}

/// `(log|z - (xc, h - p_h)| - log|z - (xc, h + p_h)|) / sqrt(delta)`.
pub fn phi_h(pt: Point, cfg: &CellConfig) -> Result<(f64, [f64; 2])> {
    let (lo, hi) = vertical_pair(cfg).points();
    log_pair(pt, lo, hi, 1.0 / cfg.delta.sqrt())
}

/// `log|z + (p_v, 0)| - log|z - (p_v, 0)|`.
pub fn phi_v(pt: Point, cfg: &CellConfig) -> Result<(f64, [f64; 2])> {
    let (lo, hi) = image_point(cfg.eps)?.points();
    log_pair(pt, lo, hi, 1.0)
}

/// Exact boundary values `(phi_h|R0, phi_h|R1)`.
pub fn phi_h_levels(cfg: &CellConfig) -> (f64, f64) {
    let x = vertical_pair(cfg).xi0() / cfg.delta.sqrt();
    (-x, x)
}

/// Exact boundary values `(phi_v|L0, phi_v|R0)`.
pub fn phi_v_levels(cfg: &CellConfig) -> (f64, f64) {
    let x = image_point(cfg.eps).expect("eps validated").xi0();
    (-x, x)
}

/// `S = -2 sqrt(delta) X Y / (X^2 + delta)^2` with `X = x - 1 - eps/2`, `Y = y - 1 - delta/2`.
#[allow(non_snake_case)]
pub fn S_term(pt: Point, cfg: &CellConfig) -> f64 {
    let x = pt.x - cfg.xc();
    let y = pt.y - cfg.half_height();
    let q = x * x + cfg.delta;
    -2.0 * cfg.delta.sqrt() * x * y / (q * q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteModel {
    pub region: StripRegion,
    /// `lambda` for `Nh`, `mu` for `Nv`.
    pub coefficient: f64,
    pub cfg: CellConfig,
}

pub fn asymptote_gradient(model: &AsymptoteModel, pt: Point) -> Result<[f64; 2]> {
    let cfg = &model.cfg;
    if !contains(model.region, pt, cfg) {
        return Err(Error::Domain(format!("({}, {}) is outside {:?}", pt.x, pt.y, model.region)));
    }
    let c = model.coefficient;
    match model.region {
        StripRegion::Nh => {
            let x = pt.x - cfg.xc();
            Ok([c * S_term(pt, cfg) / cfg.delta.sqrt(), c / (cfg.delta + x * x)])
        }
        StripRegion::Nv => Ok([c * cfg.eps.sqrt() / (cfg.eps + pt.y * pt.y), 0.0]),
        other => Err(Error::Domain(format!("no asymptote on {other:?}"))),
    }
}

/// `H(0, 1) - H(0, -1)`.
pub fn lambda_coefficient(h: &BackgroundField) -> f64 {
    eval_background(h, Point::new(0.0, 1.0)).0 - eval_background(h, Point::new(0.0, -1.0)).0
}

/// `(u|R1 - u|R0) / (phi_h|R1 - phi_h|R0)`.
pub fn alpha_h(sol_u: &CellSolution, cfg: &CellConfig) -> Result<f64> {
    let num = shift_constant(&sol_u.problem.field, cfg);
    let (lo, hi) = phi_h_levels(cfg);
    let den = hi - lo;
    if !(den > 0.0) {
        return Err(Error::Domain("degenerate phi_h levels".into()));
    }
    Ok(num / den)
}

/// `(u|R0 - u|L0) / (phi_v|R0 - phi_v|L0)`.
pub fn beta_v(sol_u: &CellSolution, cfg: &CellConfig) -> Result<f64> {
    let (lo, hi) = phi_v_levels(cfg);
    let den = hi - lo;
    if !(den > 0.0) {
        return Err(Error::Domain("degenerate phi_v levels".into()));
    }
    Ok((sol_u.c_r() - sol_u.c_l()) / den)
}

/// Vertical-gap coefficient: the mean of `d_x u` across the gap on `y = 0`
/// is `(u|R0 - u|L0)/eps`, and matching it to `mu / sqrt(eps)` gives
/// `mu = (u|R0 - u|L0) / sqrt(eps)`.
pub fn mu_extract(sol_u: &CellSolution, cfg: &CellConfig) -> f64 {
    (sol_u.c_r() - sol_u.c_l()) / cfg.eps.sqrt()
}

/// `grad u - asymptote` at `pt`.
pub fn remainder(sol: &CellSolution, model: &AsymptoteModel, pt: Point) -> Result<[f64; 2]> {
    let (_, g) = sol.eval(pt)?;
    let a = asymptote_gradient(model, pt)?;
    Ok([g[0] - a[0], g[1] - a[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_solver::{circle_integral, solve_phi};
    use crate::geometry::{sample_region, DiskId};

    fn cfg(e: f64, d: f64) -> CellConfig {
        CellConfig::new(e, d).unwrap()
    }

    fn stddev(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn image_point_values() {
        let p = image_point(0.01).unwrap();
        assert!((p.p_exact - 0.100_124_921_972_503_9).abs() < 1e-15);
        assert!(image_point(1e-12).unwrap().p_exact < 1e-5);
        assert!(image_point(0.0).is_err());
        assert!(image_point(-1.0).is_err());
        for g in [1e-4, 1e-3, 1e-2, 0.1, 1.0] {
            assert!((image_point(g).unwrap().p_exact / g.sqrt() - 1.0).abs() <= g);
        }
    }

    #[test]
    fn monopole_pair_constant_on_circles() {
        for g in [1e-4, 1e-3, 1e-2, 1e-1] {
            let c = cfg(g, 0.1);
            for side in [-1.0, 1.0] {
                let vals: Vec<f64> = (0..256)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / 256.0;
                        phi_n(Point::new(side * c.xc() + t.cos(), t.sin()), 0, &c).unwrap().0
                    })
                    .collect();
                assert!(stddev(&vals) < 1e-12, "gap {g}: {}", stddev(&vals));
            }
        }
    }

    #[test]
    fn phi0_vanishes_on_axis_and_has_unit_flux() {
        let c = cfg(0.05, 0.1);
        for y in [-3.0, 0.0, 0.4, 10.0] {
            assert_eq!(phi_n(Point::new(0.0, y), 0, &c).unwrap().0, 0.0);
        }
        let f = circle_integral(DiskId::R0, &c, 1e-12, |p, nu| {
            let (_, g) = phi_n(p, 0, &c)?;
            Ok(g[0] * nu[0] + g[1] * nu[1])
        })
        .unwrap();
        assert!((f - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lens_fields() {
        let c = cfg(0.1, 0.01);
        let mid = Point::new(c.xc(), c.half_height());
        let (v, g) = phi_h(mid, &c).unwrap();
        assert!(v.abs() < 1e-12);
        let ph = vertical_pair(&c).p_exact;
        assert!((g[1] - 2.0 / (c.delta.sqrt() * ph)).abs() < 1e-9 * g[1]);
        let f = circle_integral(DiskId::new(crate::geometry::Side::R, 1), &c, 1e-12, |p, nu| {
            let (_, g) = phi_h(p, &c)?;
            Ok(g[0] * nu[0] + g[1] * nu[1])
        })
        .unwrap();
        assert!((f - 2.0 * PI / c.delta.sqrt()).abs() < 1e-10 * f);
        let f = circle_integral(DiskId::R0, &c, 1e-12, |p, nu| {
            let (_, g) = phi_v(p, &c)?;
            Ok(g[0] * nu[0] + g[1] * nu[1])
        })
        .unwrap();
        assert!((f - 2.0 * PI).abs() < 1e-10);
        // Levels agree with direct evaluation on the circles.
        let (lo, hi) = phi_h_levels(&c);
        assert!((phi_h(Point::new(c.xc(), 1.0), &c).unwrap().0 - lo).abs() < 1e-12);
        assert!((phi_h(Point::new(c.xc() + 1.0, c.period()), &c).unwrap().0 - hi).abs() < 1e-12);
        let (l, r) = phi_v_levels(&c);
        assert!((phi_v(Point::new(c.eps / 2.0, 0.0), &c).unwrap().0 - r).abs() < 1e-12);
        assert!((phi_v(Point::new(-c.xc(), 1.0), &c).unwrap().0 - l).abs() < 1e-12);
    }

    #[test]
    fn s_term_properties() {
        let c = cfg(0.1, 0.1);
        assert_eq!(S_term(Point::new(c.xc(), c.half_height()), &c), 0.0);
        // Both offsets negative: the product is positive and the prefactor flips it.
        assert!(S_term(Point::new(c.xc() - 0.1, c.half_height() - 0.01), &c) < 0.0);
        assert!(S_term(Point::new(c.xc() + 0.1, c.half_height() - 0.01), &c) > 0.0);
        let pts = sample_region(StripRegion::Nh, &c, 4000, 0.0).unwrap();
        assert!(pts.iter().all(|&p| S_term(p, &c).abs() <= 2.0));
    }

    #[test]
    fn asymptote_special_points() {
        let c = cfg(0.04, 0.1);
        let nh = AsymptoteModel { region: StripRegion::Nh, coefficient: 2.0, cfg: c };
        let g = asymptote_gradient(&nh, Point::new(c.xc(), c.half_height())).unwrap();
        assert_eq!(g, [0.0, 2.0 / c.delta]);
        let nv = AsymptoteModel { region: StripRegion::Nv, coefficient: 0.7, cfg: c };
        let g0 = asymptote_gradient(&nv, Point::new(0.0, 0.0)).unwrap();
        assert!((g0[0] - 0.7 / c.eps.sqrt()).abs() < 1e-12);
        let g1 = asymptote_gradient(&nv, Point::new(0.0, c.eps.sqrt())).unwrap();
        assert!((g1[0] - g0[0] / 2.0).abs() < 1e-12);
        assert!(asymptote_gradient(&nv, Point::new(0.0, 0.9)).is_err());
    }

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_coefficient(&BackgroundField::linear(0.0, 1.0)), 2.0);
        assert_eq!(lambda_coefficient(&BackgroundField::linear(1.0, 0.0)), 0.0);
        let m = crate::harmonic_basis::Mode { j: 1, c_plus: 0.1, c_minus: 0.0, phase: 0.5 };
        let h = BackgroundField::linear(0.0, 1.0).with_period(2.1).with_mode(m);
        let k = 2.0 * PI / 2.1;
        let expect = 2.0 + 0.1 * ((k + 0.5).cos() - (-k + 0.5).cos());
        assert!((lambda_coefficient(&h) - expect).abs() < 1e-14);
    }

    #[test]
    fn tilde_phi_partial_sums() {
        let c = cfg(0.1, 0.1);
        assert_eq!(tilde_phi(Point::new(0.0, 0.3), &c, 100).unwrap().partial, 0.0);
        let p = Point::new(0.3, 0.6);
        let closed = tilde_phi_closed(p, &c).unwrap().0;
        let t1 = tilde_phi(p, &c, 1000).unwrap();
        let t2 = tilde_phi(p, &c, 2000).unwrap();
        assert!(t2.cauchy() <= t1.cauchy() * 0.55);
        assert!((t2.accelerated - closed).abs() < 1e-9, "{} {}", t2.accelerated, closed);
    }

    #[test]
    fn alpha_in_range() {
        let c = cfg(0.1, 0.1);
        let phi = solve_phi(&c).unwrap();
        let a = alpha_coefficient(&c, &phi, None).unwrap();
        assert!(a > 0.5 && a < 2.0);
        assert!(1.0 - a > 0.0, "alpha {a}");
        let b = alpha_coefficient(&c, &phi, Some(10_000)).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}
