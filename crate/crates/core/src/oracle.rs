//! Brute-force reference: a finite stack of `2M+1` rows of disk pairs with
//! free-space multipoles, used to cross-check the periodic solver.
//!
//! Each circle carries `2N+1` equispaced collocation points, so the
//! self-interaction block is a real DFT. The unknowns are the values of the
//! own-disk contribution at those points, which makes the system
//! `v + K v = -H` with `K` holding only the disk-to-disk couplings. It is
//! solved by restarted GMRES.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_solver::Field;
use crate::error::{Error, Result};
use crate::geometry::{circle_eq, disk_center, CellConfig, DiskId, Point, Side};
use crate::harmonic_basis::{eval_background, BackgroundField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Multipole order per disk.
    pub order: usize,
    /// Relative GMRES residual target.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl OracleOptions {
    /// Order chosen from the decay rate `1 + g/2 - sqrt(g + g^2/4)` of the
    /// image series across the narrower gap.
    pub fn for_config(cfg: &CellConfig) -> Self {
        let g = cfg.eps.min(cfg.delta);
        let r = 1.0 + g / 2.0 - (g + g * g / 4.0).sqrt();
        let order = ((1e-8f64).ln() / r.ln()).ceil().clamp(16.0, 160.0) as usize;
        Self { order, tol: 1e-11, restart: 80, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncatedArray {
    pub cfg: CellConfig,
    pub field: BackgroundField,
    pub rows: usize,
    pub options: OracleOptions,
    pub disks: Vec<DiskId>,
    /// `c_k = a_k + i b_k` for `k = 1..=order`, per disk.
    pub coeffs: Vec<Vec<C>>,
    pub constants: Vec<f64>,
    /// Relative GMRES residual on exit.
    pub gmres_residual: f64,
    pub iterations: usize,
    /// Max `|u - c|` at the midpoints between collocation nodes of the
    /// central row.
    pub residual: f64,
}

impl TruncatedArray {
    pub fn constant(&self, id: DiskId) -> Option<f64> {
        self.disks.iter().position(|d| *d == id).map(|i| self.constants[i])
    }
}

impl Field for TruncatedArray {
    fn eval(&self, p: Point) -> Result<(f64, [f64; 2])> {
        let z = p.z();
        let (h, gh) = eval_background(&self.field, p);
        let mut w = C::new(0.0, 0.0);
        let mut dw = C::new(0.0, 0.0);
        for (id, c) in self.disks.iter().zip(&self.coeffs) {
            if circle_eq(*id, p, &self.cfg) < -1e-12 {
                return Err(Error::Domain(format!("point ({}, {}) lies inside disk {id}", p.x, p.y)));
            }
            let (a, b) = multipole_sum(c, z - disk_center(*id, &self.cfg).z());
            w += a;
            dw += b;
        }
        Ok((h + w.re, [gh[0] + dw.re, gh[1] - dw.im]))
    }
}

/// `sum_k c_k z^-k` and its derivative.
fn multipole_sum(c: &[C], z: C) -> (C, C) {
    let inv = z.inv();
    let mut pk = inv;
    let mut w = C::new(0.0, 0.0);
    let mut dw = C::new(0.0, 0.0);
    for (i, ck) in c.iter().enumerate() {
        let k = (i + 1) as f64;
        w += ck * pk;
        dw -= ck * pk * inv * k;
        pk *= inv;
    }
    (w, dw)
}

fn disks_for(rows: usize) -> Vec<DiskId> {
    let m = rows as i64;
    (-m..=m).flat_map(|r| [DiskId::new(Side::L, r), DiskId::new(Side::R, r)]).collect()
}

fn nodes(p: usize) -> Vec<f64> {
    (0..p).map(|j| 2.0 * PI * j as f64 / p as f64).collect()
}

/// Own-disk values at the nodes to `(constant, c_1..c_N)`.
fn values_to_coeffs(v: &[f64], order: usize, theta: &[f64]) -> (f64, Vec<C>) {
    let p = v.len() as f64;
    let c0 = -v.iter().sum::<f64>() / p;
    let coeffs = (1..=order)
        .map(|k| {
            let (mut a, mut b) = (0.0, 0.0);
            for (vj, t) in v.iter().zip(theta) {
                let (s, c) = (k as f64 * t).sin_cos();
                a += vj * c;
                b += vj * s;
            }
            C::new(2.0 * a / p, 2.0 * b / p)
        })
        .collect();
    (c0, coeffs)
}

/// Coupling operator: matrices from own-node values of a source disk to
/// its field at the nodes of a target disk, keyed by row offset and sides.
struct Coupling {
    rows: usize,
    p: usize,
    mats: Vec<Option<DMatrix<f64>>>,
}

impl Coupling {
    fn key(&self, dr: i64, s_src: Side, s_tgt: Side) -> usize {
        let span = (4 * self.rows + 1) as i64;
        let side = |s: Side| if s == Side::L { 0 } else { 1 };
        ((dr + 2 * self.rows as i64) + span * (2 * side(s_src) + side(s_tgt))) as usize
    }

    fn build(cfg: &CellConfig, rows: usize, order: usize) -> Self {
        let p = 2 * order + 1;
        let theta = nodes(p);
        // DFT from values to (a_k, b_k).
        let mut f = DMatrix::<f64>::zeros(2 * order, p);
        for k in 1..=order {
            for (j, t) in theta.iter().enumerate() {
                let (s, c) = (k as f64 * t).sin_cos();
                f[(2 * (k - 1), j)] = 2.0 * c / p as f64;
                f[(2 * (k - 1) + 1, j)] = 2.0 * s / p as f64;
            }
        }
        let span = 4 * rows + 1;
        let mut keys = Vec::new();
        for s_src in [Side::L, Side::R] {
            for s_tgt in [Side::L, Side::R] {
                for dr in -(2 * rows as i64)..=(2 * rows as i64) {
                    if !(dr == 0 && s_src == s_tgt) {
                        keys.push((dr, s_src, s_tgt));
                    }
                }
            }
        }
        let mut out = Coupling { rows, p, mats: vec![None; 4 * span] };
        let built: Vec<(usize, DMatrix<f64>)> = keys
            .par_iter()
            .map(|&(dr, s_src, s_tgt)| {
                let src = disk_center(DiskId::new(s_src, 0), cfg).z();
                let tgt = disk_center(DiskId::new(s_tgt, dr), cfg).z();
                let mut t = DMatrix::<f64>::zeros(p, 2 * order);
                for (j, th) in theta.iter().enumerate() {
                    let inv = (tgt + C::from_polar(1.0, *th) - src).inv();
                    let mut w = inv;
                    for k in 0..order {
                        t[(j, 2 * k)] = w.re;
                        t[(j, 2 * k + 1)] = -w.im;
                        w *= inv;
                    }
                }
                let key = out.key(dr, s_src, s_tgt);
                (key, t * &f)
            })
            .collect();
        for (k, m) in built {
            out.mats[k] = Some(m);
        }
        out
    }

    fn apply(&self, disks: &[DiskId], v: &DVector<f64>) -> DVector<f64> {
        let p = self.p;
        let blocks: Vec<DVector<f64>> = disks
            .par_iter()
            .enumerate()
            .map(|(ti, t)| {
                let mut acc = DVector::from(v.rows(ti * p, p).into_owned());
                for (si, s) in disks.iter().enumerate() {
                    if si == ti {
                        continue;
                    }
                    let m = self.mats[self.key(t.row - s.row, s.side, t.side)].as_ref().expect("coupling built");
                    acc.gemv(1.0, m, &v.rows(si * p, p), 1.0);
                }
                acc
            })
            .collect();
        let mut out = DVector::zeros(v.len());
        for (i, b) in blocks.into_iter().enumerate() {
            out.rows_mut(i * p, p).copy_from(&b);
        }
        out
    }
}

/// Restarted GMRES for `A x = b` from `x = 0`. Returns the solution, the
/// relative residual and the iteration count.
pub fn gmres<F>(apply: F, b: &DVector<f64>, tol: f64, restart: usize, max_iter: usize) -> (DVector<f64>, f64, usize)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return (x, 0.0, 0);
    }
    let mut iters = 0;
    let mut rel = 1.0;
    while iters < max_iter {
        let r = b - apply(&x);
        let beta = r.norm();
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let m = restart.min(max_iter - iters);
        let mut v: Vec<DVector<f64>> = vec![r / beta];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = DVector::<f64>::zeros(m + 1);
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&v[k]);
            for (i, vi) in v.iter().enumerate() {
                let hik = w.dot(vi);
                h[(i, k)] = hik;
                w.axpy(-hik, vi, 1.0);
            }
            let hn = w.norm();
            h[(k + 1, k)] = hn;
            for i in 0..k {
                let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let d = h[(k, k)].hypot(h[(k + 1, k)]);
            cs[k] = h[(k, k)] / d;
            sn[k] = h[(k + 1, k)] / d;
            h[(k, k)] = d;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iters += 1;
            k_used = k + 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= tol || hn == 0.0 {
                break;
            }
            v.push(w / hn);
        }
        let mut y = DVector::<f64>::zeros(k_used);
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[(i, j)] * y[j]).sum();
            y[i] = (g[i] - s) / h[(i, i)];
        }
        for (i, yi) in y.iter().enumerate() {
            x.axpy(*yi, &v[i], 1.0);
        }
        if rel <= tol {
            let r = b - apply(&x);
            rel = r.norm() / bnorm;
            if rel <= tol {
                break;
            }
        }
    }
    (x, rel, iters)
}

/// Zero-flux perfect conductors at all `2(2M+1)` disk positions of rows
/// `-M..=M`, with `u - H` decaying at infinity.
pub fn solve_truncated_oracle(cfg: &CellConfig, h: &BackgroundField, rows: usize) -> Result<TruncatedArray> {
    solve_truncated_with(cfg, h, rows, &OracleOptions::for_config(cfg))
}

pub fn solve_truncated_with(cfg: &CellConfig, h: &BackgroundField, rows: usize, opts: &OracleOptions) -> Result<TruncatedArray> {
    cfg.validate()?;
    if opts.order < 1 {
        return Err(Error::InvalidConfig("oracle order must be at least 1".into()));
    }
    let order = opts.order;
    let p = 2 * order + 1;
    let theta = nodes(p);
    let disks = disks_for(rows);
    let on_circle = |id: DiskId, t: f64| {
        let c = disk_center(id, cfg);
        Point::new(c.x + t.cos(), c.y + t.sin())
    };
    let mut rhs = DVector::zeros(disks.len() * p);
    for (i, id) in disks.iter().enumerate() {
        for (j, t) in theta.iter().enumerate() {
            rhs[i * p + j] = -eval_background(h, on_circle(*id, *t)).0;
        }
    }
    let coupling = Coupling::build(cfg, rows, order);
    let (v, rel, iterations) = gmres(|x| coupling.apply(&disks, x), &rhs, opts.tol, opts.restart, opts.max_iter);
    if !(rel <= opts.tol * 10.0) {
        return Err(Error::NonConvergent { residual: rel, tol: opts.tol });
    }
    let mut coeffs = Vec::with_capacity(disks.len());
    let mut constants = Vec::with_capacity(disks.len());
    for i in 0..disks.len() {
        let (c0, c) = values_to_coeffs(v.rows(i * p, p).as_slice(), order, &theta);
        constants.push(c0);
        coeffs.push(c);
    }
    let mut sol = TruncatedArray {
        cfg: *cfg,
        field: h.clone(),
        rows,
        options: *opts,
        disks,
        coeffs,
        constants,
        gmres_residual: rel,
        iterations,
        residual: 0.0,
    };
    let mut res: f64 = 0.0;
    for id in [DiskId::L0, DiskId::R0] {
        let c = sol.constant(id).expect("central row present");
        for t in &theta {
            let (u, _) = sol.eval(on_circle(id, t + PI / p as f64))?;
            res = res.max((u - c).abs());
        }
    }
    sol.residual = res;
    Ok(sol)
}
