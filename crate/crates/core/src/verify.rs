//! Measured checks. Each check recomputes its own solves, judges the result
//! against a declared tolerance, and reports one row per sweep point.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    alpha_coefficient, asymptote_gradient, lambda_coefficient, mu_extract, AsymptoteModel,
};
use crate::cell_solver::{
    field_scale, flux, shift_constant, solve_phi, solve_with, BoundaryProblem, CellSolution, Field,
    SolveOptions, Variant,
};
use crate::error::{Error, Result};
use crate::geometry::{
    boundary_distance, disk_center, graded_lens_grid, random_points, sample_region, CellConfig, DiskId,
    Point, Side, StripRegion,
};
use crate::harmonic_basis::{eval_background, BackgroundField};
use crate::oracle::solve_truncated_oracle;

/// Gap sweep `1e-1, 10^-1.5, 1e-2, 10^-2.5, 1e-3`.
pub fn default_grid() -> Vec<f64> {
    [-1.0, -1.5, -2.0, -2.5, -3.0].iter().map(|e: &f64| 10f64.powf(*e)).collect()
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub delta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub measured: f64,
    pub expected: f64,
    pub tol: f64,
    pub pass: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub claim: String,
    pub rows: Vec<SweepRow>,
    /// Named scalars derived from the rows (spreads, slopes, ratios).
    pub summary: Vec<(String, f64)>,
    /// Tolerance of the headline comparison.
    pub tol: f64,
    pub pass: bool,
    pub seconds: f64,
}

impl CheckResult {
    fn new(name: &str, claim: &str, tol: f64) -> Self {
        Self { name: name.into(), claim: claim.into(), rows: Vec::new(), summary: Vec::new(), tol, pass: true, seconds: 0.0 }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    fn note(&mut self, key: &str, v: f64) {
        self.summary.push((key.into(), v));
    }

    fn require(&mut self, ok: bool) {
        self.pass &= ok;
    }

    pub fn line(&self) -> String {
        let s: Vec<String> = self.summary.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        format!("{} {} [{}] ({:.1}s)", if self.pass { "PASS" } else { "FAIL" }, self.name, s.join(", "), self.seconds)
    }
}

/// Least-squares line through `(abscissa, ordinate)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the fit residuals.
    pub residual: f64,
}

impl RateFit {
    pub fn fit(abscissa: Vec<f64>, ordinate: Vec<f64>) -> Result<Self> {
        let n = abscissa.len();
        if n < 4 || ordinate.len() != n {
            return Err(Error::InvalidConfig(format!("rate fit needs at least 4 paired points, got {n}")));
        }
        let mx = abscissa.iter().sum::<f64>() / n as f64;
        let my = ordinate.iter().sum::<f64>() / n as f64;
        let sxx: f64 = abscissa.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = abscissa.iter().zip(&ordinate).map(|(x, y)| (x - mx) * (y - my)).sum();
        if !(sxx > 0.0) {
            return Err(Error::InvalidConfig("rate fit abscissae are all equal".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss: f64 = abscissa.iter().zip(&ordinate).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        Ok(Self { abscissa, ordinate, slope, intercept, residual: (ss / n as f64).sqrt() })
    }

    /// Fit of `ln y` against `ln x`.
    pub fn log_log(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::fit(x.iter().map(|v| v.ln()).collect(), y.iter().map(|v| v.ln()).collect())
    }
}

/// Declared tolerances. Names match the `--tol-<name>` flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub shift: f64,
    /// Allowed max/min ratio for quantities claimed to be uniformly bounded.
    pub stability: f64,
    pub delta_stability: f64,
    pub identity: f64,
    /// Relative closeness of `delta * max|grad u|` to `lambda`.
    pub lead_h: f64,
    /// Relative closeness of `max|grad u| sqrt(eps) / mu` to one.
    pub lead_v: f64,
    /// Bound `K` on the lens remainder in units of `sup |H|` over the window.
    pub remainder: f64,
    /// Bound `K` in `|mu| <= K sqrt(eps)` for fields even in `x`.
    pub mu_even: f64,
    pub slope: f64,
    pub fit_residual: f64,
    pub decay_margin: f64,
    pub decay_spread: f64,
    pub oracle: f64,
    pub evenness: f64,
    /// Bound `K` in `0 < 1 - alpha <= K sqrt(eps)`.
    pub alpha: f64,
    pub laplacian: f64,
    pub gradient: f64,
    pub flux: f64,
    pub periodicity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            shift: 1e-8,
            stability: 3.0,
            delta_stability: 2.0,
            identity: 1e-8,
            lead_h: 0.05,
            lead_v: 0.10,
            remainder: 10.0,
            mu_even: 1.0,
            slope: 0.05,
            fit_residual: 0.02,
            decay_margin: 0.05,
            decay_spread: 0.05,
            oracle: 1e-3,
            evenness: 1e-10,
            alpha: 2.0,
            laplacian: 1e-6,
            gradient: 1e-7,
            flux: 1e-8,
            periodicity: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, name: &str, v: f64) -> Result<()> {
        let slot = match name.replace('-', "_").as_str() {
            "shift" => &mut self.shift,
            "stability" => &mut self.stability,
            "delta_stability" => &mut self.delta_stability,
            "identity" => &mut self.identity,
            "lead_h" => &mut self.lead_h,
            "lead_v" => &mut self.lead_v,
            "remainder" => &mut self.remainder,
            "mu_even" => &mut self.mu_even,
            "slope" => &mut self.slope,
            "fit_residual" => &mut self.fit_residual,
            "decay_margin" => &mut self.decay_margin,
            "decay_spread" => &mut self.decay_spread,
            "oracle" => &mut self.oracle,
            "evenness" => &mut self.evenness,
            "alpha" => &mut self.alpha,
            "laplacian" => &mut self.laplacian,
            "gradient" => &mut self.gradient,
            "flux" => &mut self.flux,
            "periodicity" => &mut self.periodicity,
            other => return Err(Error::InvalidConfig(format!("unknown tolerance '{other}'"))),
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidConfig(format!("tolerance {name} must be positive, got {v}")));
        }
        *slot = v;
        Ok(())
    }
}

/// Solve with default options for `cfg`.
pub fn solve_two_row(cfg: &CellConfig, h: &BackgroundField) -> Result<CellSolution> {
    solve_with(&BoundaryProblem::new(*cfg, h.clone()), &SolveOptions::for_config(cfg))
}

/// Solve one row variant with default options.
pub fn solve_variant(cfg: &CellConfig, h: &BackgroundField, variant: Variant) -> Result<CellSolution> {
    let problem = match variant {
        Variant::TwoRow => BoundaryProblem::new(*cfg, h.clone()),
        Variant::SingleRow => BoundaryProblem::single_row(*cfg, h.clone()),
    };
    solve_with(&problem, &SolveOptions::for_config(cfg))
}

fn with_eps(cfg: &CellConfig, eps: f64) -> Result<CellConfig> {
    CellConfig::with_m(eps, cfg.delta, cfg.m)
}

fn with_delta(cfg: &CellConfig, delta: f64) -> Result<CellConfig> {
    CellConfig::with_m(cfg.eps, delta, cfg.m)
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi / lo
}

fn norm(g: [f64; 2]) -> f64 {
    g[0].hypot(g[1])
}

fn circle_points(id: DiskId, cfg: &CellConfig, n: usize) -> Vec<Point> {
    let c = disk_center(id, cfg);
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * (i as f64 + 0.5) / n as f64;
            Point::new(c.x + t.cos(), c.y + t.sin())
        })
        .collect()
}

fn mean_on(sol: &CellSolution, id: DiskId) -> Result<f64> {
    let pts = circle_points(id, sol.cfg(), 64);
    let mut s = 0.0;
    for p in &pts {
        s += sol.eval(*p)?.0;
    }
    Ok(s / pts.len() as f64)
}

/// Difference of boundary values of `u` on `R1` and `R0`, read off by
/// evaluating the solution on both circles.
pub fn check_period_shift(cfg: &CellConfig, h: &BackgroundField, tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut out = CheckResult::new("period-shift", "u|R1 - u|R0 = H(0, 1+delta/2) - H(0, -1-delta/2)", tol.shift);
    let sol = solve_two_row(cfg, h)?;
    let measured = mean_on(&sol, DiskId::new(Side::R, 1))? - mean_on(&sol, DiskId::R0)?;
    let expected = shift_constant(h, cfg);
    let err = (measured - expected).abs();
    let pass = err <= tol.shift && err <= 10.0 * sol.residual.max(1e-15);
    out.rows.push(SweepRow { eps: cfg.eps, delta: cfg.delta, n: sol.options.n, measured, expected, tol: tol.shift, pass, seconds: t0.elapsed().as_secs_f64() });
    out.note("measured", measured);
    out.note("expected", expected);
    out.note("error", err);
    out.note("solver_residual", sol.residual);
    out.require(pass);
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// `(c_R - c_L)/sqrt(eps)` for `H = x` over an `eps` sweep (and a short
/// `delta` sweep at the template `eps`).
pub fn check_gap_scaling(template: &CellConfig, eps_list: &[f64], delta_list: &[f64], tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut out = CheckResult::new("gap-scaling", "potential difference across the horizontal gap is of order sqrt(eps)", tol.stability);
    let h = BackgroundField::linear(1.0, 0.0);
    let mut cfgs: Vec<(CellConfig, bool)> = Vec::new();
    for &e in eps_list {
        cfgs.push((with_eps(template, e)?, true));
    }
    for &d in delta_list {
        cfgs.push((with_delta(template, d)?, false));
    }
    let rows: Vec<Result<(SweepRow, bool)>> = cfgs
        .par_iter()
        .map(|(c, in_eps)| {
            let t = Instant::now();
            let sol = solve_two_row(c, &h)?;
            let r = (sol.c_r() - sol.c_l()) / c.eps.sqrt();
            Ok((SweepRow { eps: c.eps, delta: c.delta, n: sol.options.n, measured: r, expected: f64::NAN, tol: tol.stability, pass: r > 0.0, seconds: t.elapsed().as_secs_f64() }, *in_eps))
        })
        .collect();
    let mut ev = Vec::new();
    let mut dv = Vec::new();
    for r in rows {
        let (row, in_eps) = r?;
        out.require(row.pass);
        if in_eps { ev.push(row.measured) } else { dv.push(row.measured) }
        out.rows.push(row);
    }
    if !ev.is_empty() {
        let s = spread(&ev);
        out.note("eps_min_ratio", ev.iter().cloned().fold(f64::INFINITY, f64::min));
        out.note("eps_max_ratio", ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        out.note("eps_spread", s);
        out.require(s <= tol.stability);
    }
    if !dv.is_empty() {
        let s = spread(&dv);
        out.note("delta_spread", s);
        out.require(s <= tol.delta_stability);
    }
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// `c_R - c_L` of `u` against the boundary integral of `H` times the
/// normal derivative of the reference potential.
pub fn check_identity(cfg: &CellConfig, h: &BackgroundField, tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut out = CheckResult::new("flux-identity", "c_R - c_L equals the boundary integral of H d_nu phi over both circles", tol.identity);
    let phi = solve_phi(cfg)?;
    let (lhs, rhs) = crate::cell_solver::integral_identity(&phi, h)?;
    let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-3);
    let pass = rel <= tol.identity;
    out.rows.push(SweepRow { eps: cfg.eps, delta: cfg.delta, n: phi.options.n, measured: lhs, expected: rhs, tol: tol.identity, pass, seconds: t0.elapsed().as_secs_f64() });
    out.note("lhs", lhs);
    out.note("rhs", rhs);
    out.note("relative_error", rel);
    out.require(pass);
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// Lens measurement on one solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensStats {
    pub gap: f64,
    pub coefficient: f64,
    pub max_gradient: f64,
    pub max_remainder: f64,
    /// Offset of the arg max from the gap axis, along the lens.
    pub argmax_offset: f64,
}

/// Graded grid sizes for the lens sups.
const LENS_NS: usize = 81;
const LENS_NT: usize = 41;

/// Sup of `|grad u|` and of `|grad u - asymptote|` over a graded lens grid.
pub fn lens_stats(sol: &CellSolution, region: StripRegion, coefficient: f64) -> Result<LensStats> {
    let cfg = *sol.cfg();
    let model = AsymptoteModel { region, coefficient, cfg };
    let pts = graded_lens_grid(region, &cfg, LENS_NS, LENS_NT, 0.0)?;
    let mut best = LensStats { gap: 0.0, coefficient, max_gradient: 0.0, max_remainder: 0.0, argmax_offset: 0.0 };
    for p in pts {
        let (_, g) = sol.eval(p)?;
        let a = asymptote_gradient(&model, p)?;
        let n = norm(g);
        if n > best.max_gradient {
            best.max_gradient = n;
            best.argmax_offset = match region {
                StripRegion::Nh => (p.x - cfg.xc()).abs(),
                _ => p.y.abs(),
            };
        }
        best.max_remainder = best.max_remainder.max(norm([g[0] - a[0], g[1] - a[1]]));
    }
    best.gap = match region {
        StripRegion::Nh => cfg.delta,
        _ => cfg.eps,
    };
    Ok(best)
}

/// `sup |H|` over the window `|x| < m` of the strip, on a 161 x 41 grid.
pub fn sup_norm(h: &BackgroundField, cfg: &CellConfig) -> f64 {
    let hh = h.clone().with_period(cfg.period());
    let (m, t) = (cfg.m, cfg.half_height());
    let mut s: f64 = 0.0;
    for i in 0..=160 {
        for j in 0..=40 {
            let p = Point::new(-m + 2.0 * m * i as f64 / 160.0, -t + 2.0 * t * j as f64 / 40.0);
            s = s.max(eval_background(&hh, p).0.abs());
        }
    }
    s
}

/// Rows for a lens sweep: each remainder must stay below `K |H|`, and the
/// remainders must not drift by more than the stability factor. With a
/// nonzero leading term the remainder must also shrink relative to the
/// peak gradient as the gap closes.
fn remainder_rows(
    out: &mut CheckResult,
    stats: &[(CellConfig, usize, LensStats, f64)],
    scale: f64,
    leading: bool,
    tol: &Tolerances,
) {
    let bound = tol.remainder * scale;
    for (c, n, s, secs) in stats {
        let pass = s.max_remainder <= bound;
        out.require(pass);
        out.rows.push(SweepRow { eps: c.eps, delta: c.delta, n: *n, measured: s.max_remainder, expected: 0.0, tol: bound, pass, seconds: *secs });
    }
    let mut by_gap: Vec<&LensStats> = stats.iter().map(|s| &s.2).collect();
    by_gap.sort_by(|a, b| b.gap.total_cmp(&a.gap));
    let rem: Vec<f64> = by_gap.iter().map(|s| s.max_remainder).collect();
    out.note("remainder_bound", bound);
    out.note("max_remainder", rem.iter().cloned().fold(0.0, f64::max));
    if scale == 0.0 {
        return;
    }
    let s = spread(&rem);
    out.note("remainder_spread", s);
    out.require(s <= tol.stability);
    if leading {
        let ratio = |l: &LensStats| l.max_remainder / l.max_gradient;
        let (a, b) = (ratio(by_gap[0]), ratio(by_gap[by_gap.len() - 1]));
        out.note("remainder_ratio_first", a);
        out.note("remainder_ratio_last", b);
        if by_gap.len() > 1 {
            out.require(b < a);
        }
    }
}

/// Vertical-gap asymptote for any `H`: `lambda = H(0,1) - H(0,-1)`,
/// remainder bounded over a `delta` sweep, and `delta max|grad u|` close to
/// `lambda` at the smallest `delta`.
pub fn check_asymptote_nh(template: &CellConfig, h: &BackgroundField, deltas: &[f64], variant: Variant, tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let name = if variant == Variant::SingleRow { "single-row-asymptote" } else { "asymptote-nh" };
    let mut out = CheckResult::new(name, "grad u = lambda (S/sqrt(delta), 1/(delta + X^2)) + O(|H|) in the vertical gap lens", tol.remainder);
    let lambda = lambda_coefficient(&h.clone().with_period(template.period()));
    let stats: Vec<Result<(CellConfig, usize, LensStats, f64)>> = deltas
        .par_iter()
        .map(|&d| {
            let t = Instant::now();
            let c = with_delta(template, d)?;
            let hh = h.clone().with_period(c.period());
            let sol = solve_variant(&c, &hh, variant)?;
            let s = lens_stats(&sol, StripRegion::Nh, lambda_coefficient(&hh))?;
            Ok((c, sol.options.n, s, t.elapsed().as_secs_f64()))
        })
        .collect();
    let stats = stats.into_iter().collect::<Result<Vec<_>>>()?;
    let scale = sup_norm(h, template);
    remainder_rows(&mut out, &stats, scale, lambda != 0.0, tol);
    out.note("lambda", lambda);
    let last = stats.iter().min_by(|a, b| a.2.gap.total_cmp(&b.2.gap)).expect("nonempty sweep");
    let lead = last.2.gap * last.2.max_gradient;
    out.note("lead_product", lead);
    if lambda.abs() > 0.0 {
        out.require(((lead - lambda.abs()) / lambda).abs() <= tol.lead_h);
        let fibers = stats.iter().all(|s| s.2.argmax_offset <= s.2.gap.sqrt());
        out.note("argmax_in_fiber", if fibers { 1.0 } else { 0.0 });
        out.require(fibers);
        if stats.len() >= 4 {
            let gaps: Vec<f64> = stats.iter().map(|s| s.2.gap).collect();
            let g: Vec<f64> = stats.iter().map(|s| s.2.max_gradient).collect();
            let f = RateFit::log_log(&gaps, &g)?;
            out.note("slope", f.slope);
            out.require((f.slope + 1.0).abs() <= tol.slope);
        }
    } else {
        let g: f64 = stats.iter().map(|s| s.2.max_gradient).fold(0.0, f64::max);
        out.note("max_gradient", g);
        out.require(g <= tol.remainder * scale);
    }
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// Horizontal-gap asymptote. `mu` is extracted from the potential
/// difference; for `H = x` it must stay bracketed away from zero and match
/// the peak gradient, for fields even in `x` it must vanish like `sqrt(eps)`.
pub fn check_asymptote_nv(template: &CellConfig, h: &BackgroundField, eps_list: &[f64], tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut out = CheckResult::new("asymptote-nv", "grad u = mu sqrt(eps)/(eps + y^2) (1,0) + O(|H|) in the horizontal gap lens", tol.remainder);
    let stats: Vec<Result<(CellConfig, usize, LensStats, f64)>> = eps_list
        .par_iter()
        .map(|&e| {
            let t = Instant::now();
            let c = with_eps(template, e)?;
            let hh = h.clone().with_period(c.period());
            let sol = solve_two_row(&c, &hh)?;
            let s = lens_stats(&sol, StripRegion::Nv, mu_extract(&sol, &c))?;
            Ok((c, sol.options.n, s, t.elapsed().as_secs_f64()))
        })
        .collect();
    let stats = stats.into_iter().collect::<Result<Vec<_>>>()?;
    let scale = sup_norm(h, template);
    let hp = h.clone().with_period(template.period());
    let odd = eval_background(&hp, Point::new(1.0, 0.0)).0 - eval_background(&hp, Point::new(-1.0, 0.0)).0;
    remainder_rows(&mut out, &stats, scale, odd.abs() > 1e-12, tol);
    let mus: Vec<f64> = stats.iter().map(|s| s.2.coefficient).collect();
    out.note("mu_min", mus.iter().cloned().fold(f64::INFINITY, f64::min));
    out.note("mu_max", mus.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    // The odd part of H along the gap axis drives mu.
    if odd.abs() > 1e-12 {
        let positive = mus.iter().all(|m| m * odd > 0.0);
        out.require(positive);
        let s = spread(&mus.iter().map(|m| m.abs()).collect::<Vec<_>>());
        out.note("mu_spread", s);
        out.require(s <= tol.stability);
        let last = stats.iter().min_by(|a, b| a.2.gap.total_cmp(&b.2.gap)).expect("nonempty sweep");
        let lead = last.2.max_gradient * last.2.gap.sqrt() / last.2.coefficient.abs();
        out.note("lead_ratio", lead);
        out.require((lead - 1.0).abs() <= tol.lead_v);
    } else {
        let k = stats.iter().map(|s| s.2.coefficient.abs() / s.2.gap.sqrt()).fold(0.0, f64::max);
        out.note("mu_over_sqrt_eps", k);
        out.require(k <= tol.mu_even);
    }
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// Log-log slopes of the peak lens gradients: `H = y` against `delta` and
/// `H = x` against `eps`.
pub fn check_rates(template: &CellConfig, eps_list: &[f64], delta_list: &[f64], tol: &Tolerances) -> Result<(CheckResult, RateFit, RateFit)> {
    let t0 = Instant::now();
    let mut out = CheckResult::new("rates", "peak gradients grow like 1/delta and 1/sqrt(eps)", tol.slope);
    let mut jobs: Vec<(CellConfig, StripRegion)> = Vec::new();
    for &d in delta_list {
        jobs.push((with_delta(template, d)?, StripRegion::Nh));
    }
    for &e in eps_list {
        jobs.push((with_eps(template, e)?, StripRegion::Nv));
    }
    let res: Vec<Result<(CellConfig, StripRegion, usize, f64, f64)>> = jobs
        .par_iter()
        .map(|&(c, region)| {
            let t = Instant::now();
            let h = match region {
                StripRegion::Nh => BackgroundField::linear(0.0, 1.0),
                _ => BackgroundField::linear(1.0, 0.0),
            };
            let sol = solve_two_row(&c, &h)?;
            let s = lens_stats(&sol, region, 0.0)?;
            Ok((c, region, sol.options.n, s.max_gradient, t.elapsed().as_secs_f64()))
        })
        .collect();
    let res = res.into_iter().collect::<Result<Vec<_>>>()?;
    let pick = |r: StripRegion| -> (Vec<f64>, Vec<f64>) {
        res.iter()
            .filter(|x| x.1 == r)
            .map(|x| (if r == StripRegion::Nh { x.0.delta } else { x.0.eps }, x.3))
            .unzip()
    };
    let (dh, gh) = pick(StripRegion::Nh);
    let (ev, gv) = pick(StripRegion::Nv);
    let fh = RateFit::log_log(&dh, &gh)?;
    let fv = RateFit::log_log(&ev, &gv)?;
    for (c, region, n, g, secs) in &res {
        let expected = if *region == StripRegion::Nh { -1.0 } else { -0.5 };
        out.rows.push(SweepRow { eps: c.eps, delta: c.delta, n: *n, measured: *g, expected, tol: tol.slope, pass: g.is_finite(), seconds: *secs });
    }
    out.note("slope_h", fh.slope);
    out.note("slope_v", fv.slope);
    out.note("fit_residual_h", fh.residual);
    out.note("fit_residual_v", fv.residual);
    out.require((fh.slope + 1.0).abs() <= tol.slope && (fv.slope + 0.5).abs() <= tol.slope);
    out.require(fh.residual < tol.fit_residual && fv.residual < tol.fit_residual);
    out.seconds = t0.elapsed().as_secs_f64();
    Ok((out, fh, fv))
}

/// Periodic solution against truncated stacks of `2M+1` rows at 50 points
/// of the central cell. The error is the max gradient difference divided by
/// the max periodic gradient.
pub fn check_oracle(cfg: &CellConfig, h: &BackgroundField, rows: &[usize], tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut out = CheckResult::new("oracle", "periodic solver agrees with a truncated finite array", tol.oracle);
    let sol = solve_two_row(cfg, h)?;
    let pts = random_points(StripRegion::OmegaM(2.5), cfg, 50, 0.5, 7)?;
    let gp: Vec<[f64; 2]> = pts.iter().map(|p| sol.eval(*p).map(|v| v.1)).collect::<Result<_>>()?;
    let scale = gp.iter().map(|g| norm(*g)).fold(0.0, f64::max);
    let mut errs = Vec::new();
    for &m in rows {
        let t = Instant::now();
        let o = solve_truncated_oracle(cfg, h, m)?;
        let mut e: f64 = 0.0;
        for (p, g) in pts.iter().zip(&gp) {
            let q = o.eval(*p)?.1;
            e = e.max(norm([q[0] - g[0], q[1] - g[1]]));
        }
        let rel = if scale > 0.0 { e / scale } else { e };
        errs.push(rel);
        out.rows.push(SweepRow { eps: cfg.eps, delta: cfg.delta, n: m, measured: rel, expected: 0.0, tol: tol.oracle, pass: rel < tol.oracle, seconds: t.elapsed().as_secs_f64() });
        out.note(&format!("rel_error_M{m}"), rel);
    }
    let monotone = errs.windows(2).all(|w| w[1] < w[0]) || errs.iter().all(|e| *e == 0.0);
    out.note("monotone", if monotone { 1.0 } else { 0.0 });
    out.require(monotone);
    out.require(errs.last().is_some_and(|e| *e < tol.oracle));
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// Sampled maximum principle and evenness for the reference potential, and
/// the bracket on `1 - alpha` over an `eps` sweep.
pub fn check_max_principles(cfg: &CellConfig, eps_list: &[f64], tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut out = CheckResult::new("max-principle", "0 < phi/c0 < 1 on the right half strip, phi even in y, 0 < 1 - alpha = O(sqrt(eps))", tol.evenness);
    let phi = solve_phi(cfg)?;
    let c0 = phi.c_r();
    let pts: Vec<Point> = sample_region(StripRegion::OmegaM(cfg.m), cfg, 20_400, 0.01)?
        .into_iter()
        .filter(|p| p.x > 0.0)
        .take(10_000)
        .collect();
    let mut violations = 0usize;
    let mut odd: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        let v = phi.eval(*p)?.0 / c0;
        lo = lo.min(v);
        hi = hi.max(v);
        if !(v > 0.0 && v < 1.0) {
            violations += 1;
        }
        let w = phi.eval(Point::new(p.x, -p.y))?.0;
        odd = odd.max((phi.eval(*p)?.0 - w).abs());
    }
    out.note("samples", pts.len() as f64);
    out.note("violations", violations as f64);
    out.note("min_ratio", lo);
    out.note("max_ratio", hi);
    out.note("evenness", odd);
    out.require(pts.len() == 10_000 && violations == 0 && odd <= tol.evenness);
    out.rows.push(SweepRow { eps: cfg.eps, delta: cfg.delta, n: phi.options.n, measured: violations as f64, expected: 0.0, tol: 0.0, pass: violations == 0, seconds: t0.elapsed().as_secs_f64() });
    let alphas: Vec<Result<SweepRow>> = eps_list
        .par_iter()
        .map(|&e| {
            let t = Instant::now();
            let c = with_eps(cfg, e)?;
            let p = solve_phi(&c)?;
            let a = alpha_coefficient(&c, &p, None)?;
            let k = (1.0 - a) / e.sqrt();
            Ok(SweepRow { eps: c.eps, delta: c.delta, n: p.options.n, measured: k, expected: f64::NAN, tol: tol.alpha, pass: k > 0.0 && k <= tol.alpha, seconds: t.elapsed().as_secs_f64() })
        })
        .collect();
    let mut ks = Vec::new();
    for r in alphas {
        let r = r?;
        out.require(r.pass);
        ks.push(r.measured);
        out.rows.push(r);
    }
    if !ks.is_empty() {
        out.note("alpha_gap_min", ks.iter().cloned().fold(f64::INFINITY, f64::min));
        out.note("alpha_gap_max", ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// Exponential rate of `max_y |grad(u - H)|` on `x` in `[4, 8]`.
pub fn decay_slope(sol: &CellSolution) -> Result<(f64, Option<RateFit>)> {
    let cfg = sol.cfg();
    let h = cfg.half_height();
    let xs: Vec<f64> = (0..17).map(|i| 4.0 + 0.25 * i as f64).collect();
    let mut ys = Vec::new();
    for &x in &xs {
        let mut m: f64 = 0.0;
        for j in 0..33 {
            let y = -h + 2.0 * h * j as f64 / 32.0;
            m = m.max(norm(sol.eval_correction(Point::new(x, y))?.1));
        }
        ys.push(m);
    }
    if ys.iter().all(|v| *v == 0.0) {
        return Ok((f64::NEG_INFINITY, None));
    }
    if ys.contains(&0.0) {
        return Err(Error::Domain("correction gradient vanishes at part of the window".into()));
    }
    let fit = RateFit::fit(xs, ys.iter().map(|v| v.ln()).collect())?;
    Ok((fit.slope, Some(fit)))
}

pub fn check_decay(cfg: &CellConfig, fields: &[BackgroundField], tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let bound = -PI / cfg.period() + tol.decay_margin;
    let mut out = CheckResult::new("decay", "grad(u - H) decays like exp(-pi x/(2+delta)) or faster", bound);
    let mut slopes = Vec::new();
    for h in fields {
        let t = Instant::now();
        let sol = solve_two_row(cfg, h)?;
        let (s, _) = decay_slope(&sol)?;
        let pass = s <= bound;
        out.require(pass);
        out.rows.push(SweepRow { eps: cfg.eps, delta: cfg.delta, n: sol.options.n, measured: s, expected: bound, tol: tol.decay_margin, pass, seconds: t.elapsed().as_secs_f64() });
        if s.is_finite() {
            slopes.push(s);
        }
    }
    if let (Some(a), Some(b)) = (slopes.iter().cloned().reduce(f64::min), slopes.iter().cloned().reduce(f64::max)) {
        out.note("slope_min", a);
        out.note("slope_max", b);
        out.require(b - a <= tol.decay_spread);
    }
    out.note("bound", bound);
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// Invariants every solution must satisfy, measured at seeded random points
/// kept at least 0.02 away from the circles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hygiene {
    /// `max |lap_h u| d^2 / max(scale, d |grad u|)` with the fourth-order
    /// cross stencil at step `5e-3 d`.
    pub laplacian: f64,
    /// `max |grad u - grad_h u| d / scale` with step `1e-4 d`.
    pub gradient: f64,
    /// Max `|flux - q|` over the disks of the cell.
    pub flux: f64,
    /// Max of the gradient jump over one period relative to the gradient
    /// scale, and of the value jump minus the period shift over `scale`.
    pub periodicity: f64,
}

pub fn hygiene(sol: &CellSolution, seed: u64) -> Result<Hygiene> {
    let cfg = *sol.cfg();
    let scale = field_scale(&sol.problem);
    let pts: Vec<Point> = random_points(StripRegion::OmegaM(3.0), &cfg, 400, 0.0, seed)?
        .into_iter()
        .filter(|p| boundary_distance(*p, &cfg) >= 0.02)
        .collect();
    let shift = shift_constant(&sol.problem.field, &cfg);
    let u = |p: Point| sol.eval(p).map(|v| v.0);
    let (mut lap, mut grad, mut per) = (0.0f64, 0.0f64, 0.0f64);
    let vals: Vec<(f64, [f64; 2])> = pts.iter().map(|p| sol.eval(*p)).collect::<Result<_>>()?;
    let gscale = vals.iter().map(|v| norm(v.1)).fold(1e-300, f64::max);
    for (p, &(u0, g)) in pts.iter().zip(&vals) {
        let d = boundary_distance(*p, &cfg).min(1.0);
        let e = 5e-3 * d;
        let mut l = -60.0 * u0;
        for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            l += 16.0 * u(Point::new(p.x + dx * e, p.y + dy * e))? - u(Point::new(p.x + 2.0 * dx * e, p.y + 2.0 * dy * e))?;
        }
        lap = lap.max((l / (12.0 * e * e)).abs() * d * d / scale.max(d * norm(g)));
        let e = 1e-4 * d;
        let gx = (u(Point::new(p.x + e, p.y))? - u(Point::new(p.x - e, p.y))?) / (2.0 * e);
        let gy = (u(Point::new(p.x, p.y + e))? - u(Point::new(p.x, p.y - e))?) / (2.0 * e);
        grad = grad.max(norm([g[0] - gx, g[1] - gy]) * d / scale);
        let (u1, g1) = sol.eval(Point::new(p.x, p.y + cfg.period()))?;
        per = per.max((u1 - u0 - shift).abs() / scale);
        per = per.max(norm([g1[0] - g[0], g1[1] - g[1]]) / gscale);
    }
    if pts.is_empty() {
        return Err(Error::EmptySample("hygiene sample".into()));
    }
    let mut fl: f64 = 0.0;
    for d in &sol.disks {
        let q = sol.problem.flux[if d.side == Side::L { 0 } else { 1 }];
        fl = fl.max((flux(sol, *d)? - q).abs());
    }
    Ok(Hygiene { laplacian: lap, gradient: grad, flux: fl, periodicity: per })
}

pub fn check_hygiene(sols: &[&CellSolution], tol: &Tolerances) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut out = CheckResult::new("hygiene", "harmonicity, flux, periodicity and analytic gradients on every solution", tol.laplacian);
    let hs: Vec<Result<Hygiene>> = sols.par_iter().enumerate().map(|(i, s)| hygiene(s, 1000 + i as u64)).collect();
    let mut worst = Hygiene { laplacian: 0.0, gradient: 0.0, flux: 0.0, periodicity: 0.0 };
    for (s, h) in sols.iter().zip(hs) {
        let h = h?;
        let pass = h.laplacian <= tol.laplacian && h.gradient <= tol.gradient && h.flux <= tol.flux && h.periodicity <= tol.periodicity;
        out.require(pass);
        worst.laplacian = worst.laplacian.max(h.laplacian);
        worst.gradient = worst.gradient.max(h.gradient);
        worst.flux = worst.flux.max(h.flux);
        worst.periodicity = worst.periodicity.max(h.periodicity);
        let c = s.cfg();
        out.rows.push(SweepRow { eps: c.eps, delta: c.delta, n: s.options.n, measured: h.laplacian, expected: 0.0, tol: tol.laplacian, pass, seconds: 0.0 });
    }
    out.note("laplacian", worst.laplacian);
    out.note("gradient", worst.gradient);
    out.note("flux", worst.flux);
    out.note("periodicity", worst.periodicity);
    out.seconds = t0.elapsed().as_secs_f64();
    Ok(out)
}

/// Named groups runnable from the command line.
pub const CLAIMS: [&str; 11] = [
    "period-shift",
    "gap-scaling",
    "flux-identity",
    "asymptote-nh",
    "asymptote-nv",
    "rates",
    "oracle",
    "max-principle",
    "decay",
    "single-row",
    "hygiene",
];

/// Inputs shared by the default suite. Without an explicit `field` each
/// claim uses its own fields: `y` for the shift and the vertical lens,
/// `x` and `y` for the horizontal lens, `x` for the oracle, and `x`, `y`,
/// `x + 2y` for the flux identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub cfg: CellConfig,
    pub field: Option<BackgroundField>,
    pub eps_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub rows: Vec<usize>,
    pub tol: Tolerances,
}

impl SuiteSpec {
    pub fn new(cfg: CellConfig) -> Self {
        Self { cfg, field: None, eps_grid: default_grid(), delta_grid: default_grid(), rows: vec![10, 20, 50], tol: Tolerances::default() }
    }

    fn fields(&self, default: &[BackgroundField]) -> Vec<BackgroundField> {
        match &self.field {
            Some(h) => vec![h.clone()],
            None => default.to_vec(),
        }
    }
}

/// Joins per-field results of one claim.
fn merge(name: &str, parts: Vec<CheckResult>) -> CheckResult {
    let mut parts = parts.into_iter();
    let mut out = parts.next().expect("at least one part");
    out.name = name.into();
    let mut k = 1;
    for p in parts {
        out.pass &= p.pass;
        out.seconds += p.seconds;
        out.rows.extend(p.rows);
        out.summary.extend(p.summary.into_iter().map(|(key, v)| (format!("{key}#{k}"), v)));
        k += 1;
    }
    out
}

/// Runs one named claim.
pub fn run_claim(name: &str, s: &SuiteSpec) -> Result<CheckResult> {
    let x = BackgroundField::linear(1.0, 0.0);
    let y = BackgroundField::linear(0.0, 1.0);
    let each = |fields: Vec<BackgroundField>, f: &dyn Fn(&BackgroundField) -> Result<CheckResult>| -> Result<CheckResult> {
        let parts = fields.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(merge(name, parts))
    };
    match name {
        "period-shift" => each(s.fields(std::slice::from_ref(&y)), &|h| check_period_shift(&s.cfg, h, &s.tol)),
        "gap-scaling" => check_gap_scaling(&s.cfg, &s.eps_grid, &[0.05, 0.1, 0.2], &s.tol),
        "flux-identity" => each(s.fields(&[x.clone(), y.clone(), BackgroundField::linear(1.0, 2.0)]), &|h| check_identity(&s.cfg, h, &s.tol)),
        "asymptote-nh" => each(s.fields(std::slice::from_ref(&y)), &|h| check_asymptote_nh(&s.cfg, h, &s.delta_grid, Variant::TwoRow, &s.tol)),
        "asymptote-nv" => each(s.fields(&[x.clone(), y.clone()]), &|h| check_asymptote_nv(&s.cfg, h, &s.eps_grid, &s.tol)),
        "rates" => check_rates(&s.cfg, &s.eps_grid, &s.delta_grid, &s.tol).map(|r| r.0),
        "oracle" => each(s.fields(std::slice::from_ref(&x)), &|h| check_oracle(&s.cfg, h, &s.rows, &s.tol)),
        "max-principle" => check_max_principles(&s.cfg, &s.eps_grid, &s.tol),
        "decay" => check_decay(&s.cfg, &s.fields(&[x.clone(), y.clone()]), &s.tol),
        "single-row" => each(s.fields(std::slice::from_ref(&y)), &|h| check_asymptote_nh(&s.cfg, h, &s.delta_grid, Variant::SingleRow, &s.tol)),
        "hygiene" => {
            let h = s.fields(&[BackgroundField::linear(1.0, 1.0)]).remove(0);
            let a = solve_two_row(&s.cfg, &h)?;
            let b = solve_phi(&s.cfg)?;
            let c = solve_variant(&s.cfg, &h, Variant::SingleRow)?;
            check_hygiene(&[&a, &b, &c], &s.tol)
        }
        other => Err(Error::InvalidConfig(format!("unknown claim '{other}'; expected one of {}", CLAIMS.join(", ")))),
    }
}
