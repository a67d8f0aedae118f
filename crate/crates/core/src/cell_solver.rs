//! Periodic cell problem for the two-column disk array.
//!
//! The unknown field is written `u = H + w + v` where `w` is a fixed sum of
//! periodized log-sinh monopoles carrying the prescribed fluxes and `v` is a
//! combination of flux-free periodized elements: multipoles about each disk
//! center and, for narrow gaps, pole families at the bipolar limit points of
//! that gap. Each element `G` contributes the two real columns `Re G` and
//! `Im G`. The Dirichlet constants enter as one extra column per disk; the
//! additive gauge is fixed by the basis itself, every element satisfying
//! `v(+inf) + v(-inf) = 0`.
//!
//! Fluxes are reported with the normal pointing into the disk.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{circle_eq, disk_center, CellConfig, DiskId, Point, Side};
use crate::harmonic_basis::{eval_background, BackgroundField, PeriodicKernel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Left and right columns of disks.
    TwoRow,
    /// Right column only.
    SingleRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProblem {
    pub cfg: CellConfig,
    pub field: BackgroundField,
    /// Prescribed fluxes `(q_L, q_R)` with the normal pointing into the disk.
    pub flux: [f64; 2],
    pub variant: Variant,
}

impl BoundaryProblem {
    pub fn new(cfg: CellConfig, field: BackgroundField) -> Self {
        let field = field.with_period(cfg.period());
        BoundaryProblem { cfg, field, flux: [0.0, 0.0], variant: Variant::TwoRow }
    }

    pub fn single_row(cfg: CellConfig, field: BackgroundField) -> Self {
        BoundaryProblem { variant: Variant::SingleRow, ..Self::new(cfg, field) }
    }

    pub fn phi(cfg: CellConfig) -> Self {
        BoundaryProblem { flux: [-1.0, 1.0], ..Self::new(cfg, BackgroundField::zero()) }
    }

    pub fn disks(&self) -> Vec<DiskId> {
        match self.variant {
            Variant::TwoRow => vec![DiskId::L0, DiskId::R0],
            Variant::SingleRow => vec![DiskId::R0],
        }
    }
}

/// Truncation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Highest multipole order per disk.
    pub n: usize,
    /// Equispaced collocation points per circle.
    pub m: usize,
    /// Highest order of each gap family.
    pub family_order: usize,
    /// Gaps below this width get a pole family.
    pub family_threshold: f64,
    /// Relative cut on the pivots of the rank-revealing QR.
    pub rank_tol: f64,
    /// Residual accepted by `solve_adaptive`.
    pub tol: f64,
}

impl SolveOptions {
    pub fn new(n: usize, m: usize) -> Self {
        SolveOptions { n, m, family_order: (3 * n / 4).max(8), family_threshold: 0.2, rank_tol: 1e-14, tol: 1e-8 }
    }

    /// Truncation sized for the narrowest gap of `cfg`.
    pub fn for_config(cfg: &CellConfig) -> Self {
        let g = cfg.eps.min(cfg.delta);
        let n = (16.0 * g.powf(-0.2)).round().clamp(24.0, 64.0) as usize;
        Self::new(n, 4 * n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockKind {
    /// `f_j(z - center)`, `j = 1..=order`.
    Multipole { center: Point },
    /// Scaled family `g_k` with pole inside the disk and partner inside the neighbour.
    Family { pole: Point, partner: Point, xi0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisBlock {
    pub disk: DiskId,
    pub kind: BlockKind,
    pub order: usize,
    /// `[cos, sin]` coefficient per order `1..=order`.
    pub coeffs: Vec<[f64; 2]>,
}

impl BasisBlock {
    /// `G_j` and `G_j'` for `j = 1..=order` (index 0 unused).
    fn potentials(&self, kernel: &PeriodicKernel, z: C) -> Result<(Vec<C>, Vec<C>)> {
        match &self.kind {
            BlockKind::Multipole { center } => {
                let f = kernel.multipoles(z - center.z(), self.order + 1)?;
                let d = (0..=self.order).map(|j| if j == 0 { C::new(0.0, 0.0) } else { f[j + 1] * (-(j as f64)) }).collect();
                Ok((f[..=self.order].to_vec(), d))
            }
            BlockKind::Family { pole, partner, xi0 } => {
                kernel.bipolar(z - pole.z(), pole.z() - partner.z(), (-xi0).exp(), self.order)
            }
        }
    }

    /// Complex potential of this block with its coefficients.
    fn combined(&self, kernel: &PeriodicKernel, z: C) -> Result<(C, C)> {
        let (g, dg) = self.potentials(kernel, z)?;
        let mut w = C::new(0.0, 0.0);
        let mut dw = C::new(0.0, 0.0);
        for j in 1..=self.order {
            let [a, b] = self.coeffs[j - 1];
            let c = C::new(a, -b);
            w += c * g[j];
            dw += c * dg[j];
        }
        Ok((w, dw))
    }
}

/// Periodized monopole `strength * log|(L/pi) sinh(pi (z - at)/L)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monopole {
    pub at: Point,
    pub strength: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSolution {
    pub version: u32,
    pub problem: BoundaryProblem,
    pub options: SolveOptions,
    pub disks: Vec<DiskId>,
    pub blocks: Vec<BasisBlock>,
    pub monopoles: Vec<Monopole>,
    /// Dirichlet constant per entry of `disks`.
    pub constants: Vec<f64>,
    /// Max `|u - c|` over the check grid.
    pub residual: f64,
    /// Max deviation of the quadrature flux from the prescription.
    pub flux_residual: f64,
    /// Ratio of extreme retained pivots after column equilibration.
    pub condition: f64,
    pub rank: usize,
    pub unknowns: usize,
    #[serde(skip)]
    kernel: KernelCache,
}

#[derive(Clone, Default)]
struct KernelCache(OnceLock<PeriodicKernel>);

impl std::fmt::Debug for KernelCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("KernelCache")
    }
}

impl PartialEq for CellSolution {
    fn eq(&self, o: &Self) -> bool {
        self.version == o.version
            && self.problem == o.problem
            && self.options == o.options
            && self.disks == o.disks
            && self.blocks == o.blocks
            && self.monopoles == o.monopoles
            && self.constants == o.constants
            && self.residual == o.residual
            && self.flux_residual == o.flux_residual
    }
}

/// Anything that yields a potential and its gradient.
pub trait Field {
    fn eval(&self, p: Point) -> Result<(f64, [f64; 2])>;
}

impl CellSolution {
    pub fn cfg(&self) -> &CellConfig {
        &self.problem.cfg
    }

    fn kernel(&self) -> &PeriodicKernel {
        self.kernel.0.get_or_init(|| PeriodicKernel::new(self.problem.cfg.period()))
    }

    pub fn constant(&self, id: DiskId) -> Option<f64> {
        let shift = self.problem.field.b * self.cfg().period() * id.row as f64;
        self.disks
            .iter()
            .position(|d| d.side == id.side)
            .map(|i| self.constants[i] + shift)
    }

    pub fn c_l(&self) -> f64 {
        self.constant(DiskId::L0).unwrap_or(f64::NAN)
    }

    pub fn c_r(&self) -> f64 {
        self.constant(DiskId::R0).unwrap_or(f64::NAN)
    }

    /// `u - H` as a complex potential (real part) with its derivative.
    fn correction(&self, z: C) -> Result<(C, C)> {
        let k = self.kernel();
        let mut w = C::new(0.0, 0.0);
        let mut dw = C::new(0.0, 0.0);
        for m in &self.monopoles {
            let (v, d) = k.log_sinh(z - m.at.z())?;
            w += v * m.strength;
            dw += d * m.strength;
        }
        for b in &self.blocks {
            let (v, d) = b.combined(k, z)?;
            w += v;
            dw += d;
        }
        Ok((w, dw))
    }

    fn inside_check(&self, p: Point) -> Result<()> {
        let cfg = self.cfg();
        let row = (p.y / cfg.period()).round() as i64;
        for side in [Side::L, Side::R] {
            if self.problem.variant == Variant::SingleRow && side == Side::L {
                continue;
            }
            for r in [row - 1, row, row + 1] {
                let id = DiskId::new(side, r);
                if circle_eq(id, p, cfg) < -1e-12 {
                    return Err(Error::Domain(format!("point ({}, {}) lies inside disk {id}", p.x, p.y)));
                }
            }
        }
        Ok(())
    }

    /// Gradient of `u - H`, used for decay measurements.
    pub fn eval_correction(&self, p: Point) -> Result<(f64, [f64; 2])> {
        self.inside_check(p)?;
        let (w, dw) = self.correction(p.z())?;
        Ok((w.re, [dw.re, -dw.im]))
    }
}

impl Field for CellSolution {
    fn eval(&self, p: Point) -> Result<(f64, [f64; 2])> {
        self.inside_check(p)?;
        let (w, dw) = self.correction(p.z())?;
        let (h, gh) = eval_background(&self.problem.field, p);
        Ok((h + w.re, [gh[0] + dw.re, gh[1] - dw.im]))
    }
}

pub fn eval(sol: &CellSolution, p: Point) -> Result<(f64, [f64; 2])> {
    sol.eval(p)
}

/// `H(0, 1+delta/2) - H(0, -1-delta/2)`.
pub fn shift_constant(h: &BackgroundField, cfg: &CellConfig) -> f64 {
    let t = cfg.half_height();
    eval_background(h, Point::new(0.0, t)).0 - eval_background(h, Point::new(0.0, -t)).0
}

/// Image distance `sqrt(g + g^2/4)` and bipolar parameter `acosh(1 + g/2)`.
pub fn limit_point(gap: f64) -> (f64, f64) {
    ((gap + gap * gap / 4.0).sqrt(), (1.0 + gap / 2.0).acosh())
}

fn build_blocks(problem: &BoundaryProblem, opts: &SolveOptions) -> (Vec<BasisBlock>, Vec<Monopole>) {
    let cfg = &problem.cfg;
    let two = problem.variant == Variant::TwoRow;
    let mut blocks = Vec::new();
    let (pv, xiv) = limit_point(cfg.eps);
    let (ph, xih) = limit_point(cfg.delta);
    let h = cfg.half_height();
    for id in problem.disks() {
        let c = disk_center(id, cfg);
        blocks.push(BasisBlock { disk: id, kind: BlockKind::Multipole { center: c }, order: opts.n, coeffs: vec![] });
        let k = opts.family_order;
        if two && cfg.eps < opts.family_threshold && k > 0 {
            let s = id.side.sign();
            blocks.push(BasisBlock {
                disk: id,
                kind: BlockKind::Family { pole: Point::new(s * pv, c.y), partner: Point::new(-s * pv, c.y), xi0: xiv },
                order: k,
                coeffs: vec![],
            });
        }
        if cfg.delta < opts.family_threshold && k > 0 {
            for dir in [1.0, -1.0] {
                blocks.push(BasisBlock {
                    disk: id,
                    kind: BlockKind::Family {
                        pole: Point::new(c.x, c.y + dir * (h - ph)),
                        partner: Point::new(c.x, c.y + dir * (h + ph)),
                        xi0: xih,
                    },
                    order: k,
                    coeffs: vec![],
                });
            }
        }
    }
    let mut monopoles = Vec::new();
    for (i, id) in problem.disks().into_iter().enumerate() {
        let q = match (problem.variant, id.side) {
            (Variant::SingleRow, _) => problem.flux[1],
            _ => problem.flux[i],
        };
        if q != 0.0 {
            let at = if two { Point::new(id.side.sign() * pv, 0.0) } else { disk_center(id, cfg) };
            monopoles.push(Monopole { at, strength: -q / (2.0 * PI) });
        }
    }
    (blocks, monopoles)
}

/// Points on the circle of `disk`: `m` equispaced in angle, plus `per_family`
/// points equispaced in bipolar angle for every family owned by the disk.
fn boundary_points(disk: DiskId, blocks: &[BasisBlock], cfg: &CellConfig, m: usize, per_family: usize, offset: f64) -> Vec<Point> {
    let c = disk_center(disk, cfg);
    let mut pts: Vec<Point> = (0..m)
        .map(|i| {
            let t = 2.0 * PI * (i as f64 + offset) / m as f64;
            Point::new(c.x + t.cos(), c.y + t.sin())
        })
        .collect();
    for b in blocks.iter().filter(|b| b.disk == disk) {
        if let BlockKind::Family { pole, partner, xi0 } = b.kind {
            for i in 0..per_family {
                let eta = 2.0 * PI * (i as f64 + offset) / per_family as f64;
                let w = C::from_polar(xi0.exp(), eta);
                let z = (partner.z() - pole.z() * w) / (C::new(1.0, 0.0) - w);
                // Project onto the circle to remove rounding drift.
                let d = z - c.z();
                pts.push(Point::new(c.x + d.re / d.norm(), c.y + d.im / d.norm()));
            }
        }
    }
    pts
}

struct LstsqOut {
    x: DVector<f64>,
    rank: usize,
    condition: f64,
}

/// Least squares through column-pivoted QR with rank truncation.
fn lstsq(mut a: DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> LstsqOut {
    let ncols = a.ncols();
    let mut scale = vec![1.0; ncols];
    for (j, s) in scale.iter_mut().enumerate() {
        let nrm = a.column(j).norm();
        if nrm > 0.0 {
            *s = 1.0 / nrm;
            a.column_mut(j).scale_mut(*s);
        }
    }
    let qr = a.col_piv_qr();
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let r = qr.r();
    let k = r.nrows().min(ncols);
    let r00 = r[(0, 0)].abs();
    let mut rank = 0;
    while rank < k && r[(rank, rank)].abs() > rank_tol * r00 {
        rank += 1;
    }
    let mut y = DVector::zeros(ncols);
    for i in (0..rank).rev() {
        let mut acc = qtb[i];
        for j in i + 1..rank {
            acc -= r[(i, j)] * y[j];
        }
        y[i] = acc / r[(i, i)];
    }
    qr.p().inv_permute_rows(&mut y);
    for (j, s) in scale.iter().enumerate() {
        y[j] *= s;
    }
    let condition = if rank > 0 { r00 / r[(rank - 1, rank - 1)].abs() } else { f64::INFINITY };
    LstsqOut { x: y, rank, condition }
}

/// Solves with multipole order `n` and `m` points per circle.
pub fn solve(problem: &BoundaryProblem, n: usize, m: usize) -> Result<CellSolution> {
    let mut opts = SolveOptions::for_config(&problem.cfg);
    opts.n = n;
    opts.m = m;
    opts.family_order = (3 * n / 4).max(8);
    solve_with(problem, &opts)
}

pub fn solve_with(problem: &BoundaryProblem, opts: &SolveOptions) -> Result<CellSolution> {
    problem.cfg.validate()?;
    if opts.m < 2 * opts.n + 8 {
        return Err(Error::InvalidConfig(format!("need M >= 2N + 8, got N = {}, M = {}", opts.n, opts.m)));
    }
    if problem.variant == Variant::SingleRow && problem.flux[1] != 0.0 {
        return Err(Error::InvalidConfig("single-row problem takes zero flux".into()));
    }
    let mut problem = problem.clone();
    problem.field = problem.field.clone().with_period(problem.cfg.period());
    let cfg = problem.cfg;
    let (mut blocks, monopoles) = build_blocks(&problem, opts);
    let disks = problem.disks();
    let kernel = PeriodicKernel::new(cfg.period());
    let ncoef: usize = blocks.iter().map(|b| 2 * b.order).sum();
    let ncols = ncoef + disks.len();
    let per_family = 4 * opts.family_order;

    let mut rows: Vec<(usize, Point)> = Vec::new();
    for (i, &d) in disks.iter().enumerate() {
        for p in boundary_points(d, &blocks, &cfg, opts.m, per_family, 0.0) {
            rows.push((i, p));
        }
    }
    let mut a = DMatrix::zeros(rows.len(), ncols);
    let mut rhs = DVector::zeros(rows.len());
    for (r, &(di, p)) in rows.iter().enumerate() {
        let z = p.z();
        let mut col = 0;
        for b in &blocks {
            let (g, _) = b.potentials(&kernel, z)?;
            for gj in g.iter().skip(1) {
                a[(r, col)] = gj.re;
                a[(r, col + 1)] = gj.im;
                col += 2;
            }
        }
        a[(r, ncoef + di)] = -1.0;
        let mut known = eval_background(&problem.field, p).0;
        for mp in &monopoles {
            known += mp.strength * kernel.log_sinh(z - mp.at.z())?.0.re;
        }
        rhs[r] = -known;
    }
    let out = lstsq(a, &rhs, opts.rank_tol);
    let mut col = 0;
    for b in &mut blocks {
        b.coeffs = (0..b.order).map(|j| [out.x[col + 2 * j], out.x[col + 2 * j + 1]]).collect();
        col += 2 * b.order;
    }
    let constants: Vec<f64> = (0..disks.len()).map(|i| out.x[ncoef + i]).collect();
    let mut sol = CellSolution {
        version: FORMAT_VERSION,
        problem,
        options: *opts,
        disks,
        blocks,
        monopoles,
        constants,
        residual: 0.0,
        flux_residual: 0.0,
        condition: out.condition,
        rank: out.rank,
        unknowns: ncols,
        kernel: KernelCache::default(),
    };
    sol.residual = boundary_residual(&sol)?;
    sol.flux_residual = flux_residual(&sol)?;
    Ok(sol)
}

/// Grows the truncation until the residual meets `opts.tol`, up to `n = max_n`.
pub fn solve_adaptive(problem: &BoundaryProblem, opts: &SolveOptions, max_n: usize) -> Result<CellSolution> {
    let mut o = *opts;
    let scale = field_scale(problem);
    loop {
        let sol = solve_with(problem, &o)?;
        if sol.residual <= o.tol * scale {
            return Ok(sol);
        }
        if o.n >= max_n {
            return Err(Error::NonConvergent { residual: sol.residual, tol: o.tol * scale });
        }
        let grow = |v: usize| ((v as f64) * 1.25).ceil() as usize;
        o.n = grow(o.n).min(max_n);
        o.m = o.m.max(4 * o.n);
        o.family_order = grow(o.family_order);
    }
}

/// `max(1, max |H|)` over the row-0 circles; residual tolerances are relative to it.
pub fn field_scale(problem: &BoundaryProblem) -> f64 {
    let mut s: f64 = 1.0;
    for d in problem.disks() {
        let c = disk_center(d, &problem.cfg);
        for i in 0..64 {
            let t = 2.0 * PI * i as f64 / 64.0;
            s = s.max(eval_background(&problem.field, Point::new(c.x + t.cos(), c.y + t.sin())).0.abs());
        }
    }
    s
}

/// Max `|u - c_disk|` on an offset grid four times denser in each family
/// and eight times denser in angle than the collocation grid.
pub fn boundary_residual(sol: &CellSolution) -> Result<f64> {
    let cfg = *sol.cfg();
    let mut worst: f64 = 0.0;
    for (i, &d) in sol.disks.iter().enumerate() {
        for p in boundary_points(d, &sol.blocks, &cfg, 8 * sol.options.m, 16 * sol.options.family_order, 0.5) {
            let (u, _) = sol.eval(p)?;
            worst = worst.max((u - sol.constants[i]).abs());
        }
    }
    Ok(worst)
}

/// Trapezoid rule on the circle of `disk` for `f(point, inward normal)`,
/// doubling from 64 nodes until successive values agree to `tol`.
pub fn circle_integral<F>(disk: DiskId, cfg: &CellConfig, tol: f64, f: F) -> Result<f64>
where
    F: Fn(Point, [f64; 2]) -> Result<f64>,
{
    let c = disk_center(disk, cfg);
    let node = |t: f64| -> Result<f64> {
        let (s, co) = t.sin_cos();
        f(Point::new(c.x + co, c.y + s), [-co, -s])
    };
    let mut n = 64usize;
    let mut sum = 0.0;
    for i in 0..n {
        sum += node(2.0 * PI * i as f64 / n as f64)?;
    }
    let mut prev = sum * 2.0 * PI / n as f64;
    while n < (1 << 18) {
        // New nodes are the midpoints of the old ones.
        for i in 0..n {
            sum += node(2.0 * PI * (i as f64 + 0.5) / n as f64)?;
        }
        n *= 2;
        let cur = sum * 2.0 * PI / n as f64;
        if (cur - prev).abs() <= tol * cur.abs().max(1.0) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature((sum * 2.0 * PI / n as f64 - prev).abs()))
}

/// Flux of `u` through the circle of `disk`, inward normal.
pub fn flux(sol: &CellSolution, disk: DiskId) -> Result<f64> {
    circle_integral(disk, sol.cfg(), 1e-11, |p, nu| {
        let (_, g) = sol.eval(p)?;
        Ok(g[0] * nu[0] + g[1] * nu[1])
    })
}

fn flux_residual(sol: &CellSolution) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, &d) in sol.disks.iter().enumerate() {
        let q = match sol.problem.variant {
            Variant::TwoRow => sol.problem.flux[i],
            Variant::SingleRow => sol.problem.flux[1],
        };
        worst = worst.max((flux(sol, d)? - q).abs());
    }
    Ok(worst)
}

pub fn solve_phi(cfg: &CellConfig) -> Result<CellSolution> {
    let opts = SolveOptions::for_config(cfg);
    solve_with(&BoundaryProblem::phi(*cfg), &opts)
}

pub fn solve_phi_with(cfg: &CellConfig, opts: &SolveOptions) -> Result<CellSolution> {
    solve_with(&BoundaryProblem::phi(*cfg), opts)
}

/// Both sides of the potential-difference identity: `c_R - c_L` from the
/// `u` problem for `h`, and the boundary integral of `H d_nu phi`.
pub fn integral_identity(sol_phi: &CellSolution, h: &BackgroundField) -> Result<(f64, f64)> {
    let cfg = *sol_phi.cfg();
    let problem = BoundaryProblem::new(cfg, h.clone());
    let u = solve_with(&problem, &sol_phi.options)?;
    let lhs = u.c_r() - u.c_l();
    let h = h.clone().with_period(cfg.period());
    let mut rhs = 0.0;
    for d in [DiskId::L0, DiskId::R0] {
        rhs += circle_integral(d, &cfg, 1e-10, |p, nu| {
            let (_, g) = sol_phi.eval(p)?;
            Ok(eval_background(&h, p).0 * (g[0] * nu[0] + g[1] * nu[1]))
        })?;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(e: f64, d: f64) -> CellConfig {
        CellConfig::new(e, d).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_solution() {
        let sol = solve(&BoundaryProblem::new(cfg(0.1, 0.1), BackgroundField::zero()), 12, 48).unwrap();
        assert!(sol.blocks.iter().all(|b| b.coeffs.iter().all(|c| c[0] == 0.0 && c[1] == 0.0)));
        assert_eq!(sol.constants, vec![0.0, 0.0]);
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn precondition_on_points() {
        let p = BoundaryProblem::new(cfg(0.1, 0.1), BackgroundField::linear(1.0, 0.0));
        assert!(matches!(solve(&p, 24, 40), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn odd_field_gives_odd_solution() {
        let c = cfg(0.1, 0.1);
        let sol = solve(&BoundaryProblem::new(c, BackgroundField::linear(1.0, 0.0)), 24, 96).unwrap();
        assert!(sol.residual < 1e-8, "residual {}", sol.residual);
        assert!(sol.c_r() > 0.0);
        assert!((sol.c_r() + sol.c_l()).abs() < 1e-9);
        for &(x, y) in &[(0.0, 0.5), (0.02, 0.1), (2.5, 0.3), (0.7, 1.04)] {
            let a = sol.eval(Point::new(x, y)).unwrap().0;
            let b = sol.eval(Point::new(-x, y)).unwrap().0;
            assert!((a + b).abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_is_periodic_and_values_shift() {
        let c = cfg(0.1, 0.1);
        let sol = solve(&BoundaryProblem::new(c, BackgroundField::linear(0.3, 1.0)), 20, 80).unwrap();
        let p = Point::new(0.01, 0.7);
        let q = Point::new(0.01, 0.7 + c.period());
        let (u0, g0) = sol.eval(p).unwrap();
        let (u1, g1) = sol.eval(q).unwrap();
        assert!((g0[0] - g1[0]).abs() < 1e-12 && (g0[1] - g1[1]).abs() < 1e-12);
        assert!((u1 - u0 - 2.1).abs() < 1e-10);
    }

    #[test]
    fn boundary_values_within_residual() {
        let c = cfg(0.1, 0.1);
        let sol = solve(&BoundaryProblem::new(c, BackgroundField::linear(1.0, 0.5)), 24, 96).unwrap();
        for i in 0..37 {
            let t = 0.123 + i as f64 * 0.17;
            let p = Point::new(1.05 + t.cos(), t.sin());
            assert!((sol.eval(p).unwrap().0 - sol.c_r()).abs() <= sol.residual * 1.5 + 1e-14);
        }
        assert!(sol.eval(Point::new(1.05, 0.0)).is_err());
    }

    #[test]
    fn shift_constants() {
        let c = cfg(0.1, 0.1);
        assert!((shift_constant(&BackgroundField::linear(0.0, 1.0), &c) - 2.1).abs() < 1e-14);
        assert_eq!(shift_constant(&BackgroundField::linear(1.0, 0.0), &c), 0.0);
        let h = BackgroundField::linear(0.0, 1.0)
            .with_period(c.period())
            .with_mode(crate::harmonic_basis::Mode { j: 1, c_plus: 0.2, c_minus: 0.1, phase: 0.3 });
        assert!((shift_constant(&h, &c) - 2.1).abs() < 1e-12);
    }

    #[test]
    fn phi_problem_symmetries() {
        let c = cfg(0.1, 0.1);
        let phi = solve_phi(&c).unwrap();
        let c0 = phi.c_r();
        assert!(c0 > 0.0 && (phi.c_l() + c0).abs() < 1e-9);
        assert!(phi.flux_residual < 1e-8);
        for &(x, y) in &[(0.01, 0.2), (1.5, 0.9), (3.0, -0.4)] {
            let a = phi.eval(Point::new(x, y)).unwrap().0;
            assert!((a + phi.eval(Point::new(-x, y)).unwrap().0).abs() < 1e-8);
            assert!((a - phi.eval(Point::new(x, -y)).unwrap().0).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_for_constant_field() {
        let c = cfg(0.1, 0.1);
        let phi = solve_phi(&c).unwrap();
        let mut h = BackgroundField::zero();
        h.constant = 1.0;
        let (l, r) = integral_identity(&phi, &h).unwrap();
        assert!(l.abs() < 1e-10 && r.abs() < 1e-9, "{l} {r}");
    }

    #[test]
    fn json_roundtrip() {
        let c = cfg(0.1, 0.1);
        let sol = solve(&BoundaryProblem::new(c, BackgroundField::linear(1.0, 0.0)), 12, 48).unwrap();
        let s = serde_json::to_string(&sol).unwrap();
        let back: CellSolution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sol);
        let p = Point::new(0.0, 0.3);
        assert_eq!(back.eval(p).unwrap(), sol.eval(p).unwrap());
    }
}
