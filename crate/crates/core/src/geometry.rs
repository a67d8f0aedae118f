//! Disk lattice, strip domains and the two narrow lens regions.
//!
//! Every row `n` carries a left and a right unit disk. Rows are stacked with
//! period `L = 2 + delta`, the horizontal gap inside a row is `eps` and the
//! vertical gap between consecutive rows is `delta`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn z(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    pub fn from_z(z: Complex64) -> Self {
        Point { x: z.re, y: z.im }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

/// Geometry of the doubly infinite two-column disk array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub eps: f64,
    pub delta: f64,
    /// Half-width of the truncated strip `Omega_m`.
    pub m: f64,
}

impl CellConfig {
    pub const RADIUS: f64 = 1.0;

    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        Self::with_m(eps, delta, 4.0)
    }

    pub fn with_m(eps: f64, delta: f64, m: f64) -> Result<Self> {
        let cfg = CellConfig { eps, delta, m };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidConfig(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.m >= 3.0) || !self.m.is_finite() {
            return Err(Error::InvalidConfig(format!("m must be at least 3, got {}", self.m)));
        }
        Ok(())
    }

    /// Vertical period `2 + delta`.
    pub fn period(&self) -> f64 {
        2.0 + self.delta
    }

    /// Half-height of the reference strip.
    pub fn half_height(&self) -> f64 {
        1.0 + self.delta / 2.0
    }

    /// x coordinate of the right column of centers.
    pub fn xc(&self) -> f64 {
        1.0 + self.eps / 2.0
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are ignored.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut eps = None;
        let mut delta = None;
        let mut m = 4.0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number {:?}", lineno + 1, v.trim())))?;
            match k.trim() {
                "eps" => eps = Some(v),
                "delta" => delta = Some(v),
                "m" => m = v,
                other => return Err(Error::Parse(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        let eps = eps.ok_or_else(|| Error::Parse("missing key eps".into()))?;
        let delta = delta.ok_or_else(|| Error::Parse("missing key delta".into()))?;
        Self::with_m(eps, delta, m)
    }

    pub fn to_kv(&self) -> String {
        format!("eps={:e}\ndelta={:e}\nm={:e}\n", self.eps, self.delta, self.m)
    }
}

impl FromStr for CellConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse_kv(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::L => -1.0,
            Side::R => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiskId {
    pub side: Side,
    pub row: i64,
}

impl DiskId {
    pub const L0: DiskId = DiskId { side: Side::L, row: 0 };
    pub const R0: DiskId = DiskId { side: Side::R, row: 0 };

    pub fn new(side: Side, row: i64) -> Self {
        DiskId { side, row }
    }
}

impl fmt::Display for DiskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.side, self.row)
    }
}

pub fn disk_center(id: DiskId, cfg: &CellConfig) -> Point {
    Point::new(id.side.sign() * cfg.xc(), id.row as f64 * cfg.period())
}

/// Signed circle equation `|p - c|^2 - 1`; negative inside.
pub fn circle_eq(id: DiskId, p: Point, cfg: &CellConfig) -> f64 {
    let c = disk_center(id, cfg);
    let dx = p.x - c.x;
    let dy = p.y - c.y;
    dx * dx + dy * dy - 1.0
}

/// The closed disk containing `p`, if any. Boundary points count as inside.
pub fn closed_disk_at(p: Point, cfg: &CellConfig) -> Option<DiskId> {
    let row = (p.y / cfg.period()).round() as i64;
    for side in [Side::L, Side::R] {
        for r in [row - 1, row, row + 1] {
            let id = DiskId::new(side, r);
            if circle_eq(id, p, cfg) <= 0.0 {
                return Some(id);
            }
        }
    }
    None
}

pub fn is_exterior(p: Point, cfg: &CellConfig) -> bool {
    closed_disk_at(p, cfg).is_none()
}

/// Distance from `p` to the nearest disk boundary (negative inside a disk).
pub fn boundary_distance(p: Point, cfg: &CellConfig) -> f64 {
    let row = (p.y / cfg.period()).round() as i64;
    let mut best = f64::INFINITY;
    for side in [Side::L, Side::R] {
        for r in [row - 1, row, row + 1] {
            let d = p.dist(disk_center(DiskId::new(side, r), cfg)) - 1.0;
            best = best.min(d);
        }
    }
    best
}

/// Maps `p` into the reference cell `|y| <= L/2` and returns the row shift.
pub fn reduce_to_cell(p: Point, cfg: &CellConfig) -> (Point, i64) {
    let l = cfg.period();
    let n = (p.y / l).round() as i64;
    (Point::new(p.x, p.y - n as f64 * l), n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StripRegion {
    Omega,
    OmegaM(f64),
    /// Lens between `L0` and `R0`.
    Nv,
    /// Lens between `R0` and `R1`.
    Nh,
}

/// Half-width of `Nv` at height `y`.
pub fn nv_half_width(y: f64, cfg: &CellConfig) -> f64 {
    cfg.xc() - (1.0 - y * y).max(0.0).sqrt()
}

/// Half-height of `Nh` at horizontal offset `s = x - 1 - eps/2`.
pub fn nh_half_width(s: f64, cfg: &CellConfig) -> f64 {
    cfg.half_height() - (1.0 - s * s).max(0.0).sqrt()
}

/// Set membership in the open region. Disk interiors are never part of
/// `Nv` or `Nh`; for the strips the disks are removed explicitly.
pub fn contains(region: StripRegion, p: Point, cfg: &CellConfig) -> bool {
    let h = cfg.half_height();
    match region {
        StripRegion::Omega => p.y.abs() < h && is_exterior(p, cfg),
        StripRegion::OmegaM(m) => p.y.abs() < h && p.x.abs() < m && is_exterior(p, cfg),
        StripRegion::Nv => p.y.abs() < SQRT3_2 && p.x.abs() < nv_half_width(p.y, cfg),
        StripRegion::Nh => {
            let s = p.x - cfg.xc();
            s.abs() < SQRT3_2 && (p.y - h).abs() < nh_half_width(s, cfg)
        }
    }
}

/// Membership in the copy of `region` shifted by `row` periods.
pub fn contains_in_row(region: StripRegion, p: Point, row: i64, cfg: &CellConfig) -> bool {
    let q = Point::new(p.x, p.y - row as f64 * cfg.period());
    contains(region, q, cfg)
}

/// Map from lens coordinates `(s, t)`, `t` in (-1, 1), to the plane.
fn lens_point(region: StripRegion, s: f64, t: f64, cfg: &CellConfig) -> Point {
    match region {
        StripRegion::Nv => Point::new(t * nv_half_width(s, cfg), s),
        StripRegion::Nh => Point::new(cfg.xc() + s, cfg.half_height() + t * nh_half_width(s, cfg)),
        _ => unreachable!("lens_point called on a strip"),
    }
}

fn strip_box(region: StripRegion, cfg: &CellConfig) -> (f64, f64) {
    let m = match region {
        StripRegion::OmegaM(m) => m,
        _ => cfg.m,
    };
    (m, cfg.half_height())
}

fn accept(region: StripRegion, p: Point, margin: f64, cfg: &CellConfig) -> bool {
    if !contains(region, p, cfg) || !is_exterior(p, cfg) {
        return false;
    }
    match region {
        StripRegion::Omega | StripRegion::OmegaM(_) => {
            boundary_distance(p, cfg) >= margin * cfg.eps.min(cfg.delta)
        }
        _ => true,
    }
}

/// Picks `n` entries spread evenly through `pts`.
fn spread(pts: Vec<Point>, n: usize) -> Vec<Point> {
    if pts.len() <= n {
        return pts;
    }
    let len = pts.len();
    (0..n).map(|k| pts[k * len / n]).collect()
}

/// Deterministic sample of `n_points` points in `region`.
///
/// For the lenses a tensor grid is laid in lens coordinates, and `margin`
/// is the fraction of the local gap width (measured along the gap axis)
/// kept clear on each side. For the strips `margin` is taken relative to
/// `min(eps, delta)`. The strips are sampled on the window `|x| < m`.
pub fn sample_region(region: StripRegion, cfg: &CellConfig, n_points: usize, margin: f64) -> Result<Vec<Point>> {
    if n_points == 0 {
        return Err(Error::InvalidConfig("n_points must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidConfig(format!("margin must lie in [0,1), got {margin}")));
    }
    let pts = match region {
        StripRegion::Nv | StripRegion::Nh => {
            let nt = (n_points as f64).sqrt().floor().max(1.0) as usize;
            let ns = n_points.div_ceil(nt);
            let tmax = 1.0 - margin;
            let mut out = Vec::with_capacity(ns * nt);
            for i in 0..ns {
                let s = -SQRT3_2 + (i as f64 + 0.5) * 2.0 * SQRT3_2 / ns as f64;
                for j in 0..nt {
                    let t = -tmax + (j as f64 + 0.5) * 2.0 * tmax / nt as f64;
                    let p = lens_point(region, s, t, cfg);
                    if accept(region, p, 0.0, cfg) {
                        out.push(p);
                    }
                }
            }
            out
        }
        StripRegion::Omega | StripRegion::OmegaM(_) => {
            let (hx, hy) = strip_box(region, cfg);
            let mut res = (n_points as f64).sqrt().ceil() as usize + 1;
            let mut out = Vec::new();
            for _ in 0..12 {
                out.clear();
                let nx = ((res as f64) * (hx / hy).sqrt()).ceil() as usize;
                let ny = ((res as f64) * (hy / hx).sqrt()).ceil().max(1.0) as usize;
                for i in 0..nx {
                    let x = -hx + (i as f64 + 0.5) * 2.0 * hx / nx as f64;
                    for j in 0..ny {
                        let y = -hy + (j as f64 + 0.5) * 2.0 * hy / ny as f64;
                        let p = Point::new(x, y);
                        if accept(region, p, margin, cfg) {
                            out.push(p);
                        }
                    }
                }
                if out.len() >= n_points {
                    break;
                }
                res *= 2;
            }
            out
        }
    };
    if pts.is_empty() {
        return Err(Error::EmptySample(format!("{region:?} with {n_points} points and margin {margin}")));
    }
    if pts.len() < n_points {
        return Err(Error::EmptySample(format!(
            "{region:?}: only {} of {n_points} requested points survive the margin",
            pts.len()
        )));
    }
    Ok(spread(pts, n_points))
}

/// Lens grid graded toward the gap axis: `ns` offsets along the lens
/// (always containing the axis when `ns` is odd) with spacing near the axis
/// of roughly `sqrt(gap) * ln(4 / sqrt(gap)) * 2 / ns`, and `nt` uniform
/// fractions across it.
pub fn graded_lens_grid(region: StripRegion, cfg: &CellConfig, ns: usize, nt: usize, margin: f64) -> Result<Vec<Point>> {
    let gap = match region {
        StripRegion::Nv => cfg.eps,
        StripRegion::Nh => cfg.delta,
        other => return Err(Error::InvalidConfig(format!("{other:?} is not a lens"))),
    };
    if ns < 1 || nt < 1 || !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidConfig(format!("bad lens grid {ns}x{nt}, margin {margin}")));
    }
    let w = gap.sqrt();
    let a = (SQRT3_2 / w).asinh();
    let tmax = 1.0 - margin;
    let frac = |k: usize, n: usize| if n == 1 { 0.0 } else { -1.0 + 2.0 * (k as f64 + 0.5) / n as f64 };
    let mut out = Vec::with_capacity(ns * nt);
    for i in 0..ns {
        let s = w * (a * frac(i, ns)).sinh();
        for j in 0..nt {
            let p = lens_point(region, s, tmax * frac(j, nt), cfg);
            if contains(region, p, cfg) && is_exterior(p, cfg) {
                out.push(p);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySample(format!("graded {region:?} grid")));
    }
    Ok(out)
}

/// Seeded pseudo-random sample, for property tests.
pub fn random_points(region: StripRegion, cfg: &CellConfig, n_points: usize, margin: f64, seed: u64) -> Result<Vec<Point>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_points);
    let max_tries = 1000 * n_points.max(1);
    let mut tries = 0;
    while out.len() < n_points && tries < max_tries {
        tries += 1;
        let p = match region {
            StripRegion::Nv | StripRegion::Nh => {
                let s = rng.random_range(-SQRT3_2..SQRT3_2);
                let t = rng.random_range(-(1.0 - margin)..(1.0 - margin));
                lens_point(region, s, t, cfg)
            }
            _ => {
                let (hx, hy) = strip_box(region, cfg);
                Point::new(rng.random_range(-hx..hx), rng.random_range(-hy..hy))
            }
        };
        if accept(region, p, margin, cfg) {
            out.push(p);
        }
    }
    if out.len() < n_points {
        return Err(Error::EmptySample(format!("{region:?}: rejection sampling exhausted")));
    }
    Ok(out)
}
