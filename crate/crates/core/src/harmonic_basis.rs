//! Harmonic building blocks: free-space multipoles, their vertical lattice
//! sums, bipolar pole-pair families and background fields.
//!
//! Everything is evaluated through a complex potential `G(z)`; a real basis
//! function is `Re G` (cosine parity) or `Im G` (sine parity). With
//! `G' = dG/dz` the gradients are `grad Re G = (Re G', -Im G')` and
//! `grad Im G = (Im G', Re G')`.
//!
//! The periodized multipole of order `m >= 1` is
//! `f_m(zeta) = sum_n (zeta - i n L)^(-m)` (symmetric limit for `m = 1`),
//! so it agrees term by term with the free-space element.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    /// Real part.
    Cos,
    /// Imaginary part.
    Sin,
}

/// Value and gradient of `Re G` or `Im G` given `G` and `G'`.
#[inline]
pub fn split(g: C, dg: C, parity: Parity) -> (f64, [f64; 2]) {
    match parity {
        Parity::Cos => (g.re, [dg.re, -dg.im]),
        Parity::Sin => (g.im, [dg.im, dg.re]),
    }
}

pub fn freespace_multipole(p: Point, src: Point, order: u32, parity: Parity) -> Result<(f64, [f64; 2])> {
    let zeta = p.z() - src.z();
    if zeta.norm() == 0.0 {
        return Err(Error::Domain("free-space multipole evaluated at its source".into()));
    }
    if order == 0 {
        return Ok(split(zeta.ln(), zeta.inv(), parity));
    }
    let m = order as i32;
    let g = zeta.powi(-m);
    let dg = -(m as f64) * g / zeta;
    Ok(split(g, dg, parity))
}

/// `sum_{n >= q} n^(-s)` for integer `s >= 2`.
pub fn hurwitz_zeta(s: u32, q: f64) -> f64 {
    // Bernoulli numbers B_2 .. B_16.
    const B2K: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];
    let sf = s as f64;
    let direct_terms = 24;
    let mut sum = 0.0;
    for n in 0..direct_terms {
        let t = (q + n as f64).powf(-sf);
        sum += t;
        if t < 1e-18 * sum {
            return sum;
        }
    }
    let a = q + direct_terms as f64;
    let mut tail = a.powf(1.0 - sf) / (sf - 1.0) + 0.5 * a.powf(-sf);
    // s (s+1) ... (s+2k-2) a^(-s-2k+1) / (2k)!
    let mut rising = sf;
    let mut apow = a.powf(-sf - 1.0);
    let mut fact = 2.0;
    for (k, b) in B2K.iter().enumerate() {
        let term = b / fact * rising * apow;
        tail += term;
        if term.abs() < 1e-18 * tail.abs() {
            break;
        }
        let kk = (k + 1) as f64;
        rising *= (sf + 2.0 * kk - 1.0) * (sf + 2.0 * kk);
        apow /= a * a;
        fact *= (2.0 * kk + 1.0) * (2.0 * kk + 2.0);
    }
    sum + tail
}

fn ln_factorials() -> &'static [f64] {
    static T: OnceLock<Vec<f64>> = OnceLock::new();
    T.get_or_init(|| {
        let mut v = vec![0.0; 1024];
        for i in 1..v.len() {
            v[i] = v[i - 1] + (i as f64).ln();
        }
        v
    })
}

/// Lattice-sum evaluator for period `L`: direct sum over `|n| <= K`,
/// Taylor tail with Hurwitz-zeta coefficients, exponential series for
/// `|Re zeta| >= L`.
#[derive(Debug, Clone)]
pub struct PeriodicKernel {
    pub period: f64,
    pub cutoff: usize,
    /// `c[s] = sum_{|n| > K} (-i n L)^(-s)`.
    tail: Vec<C>,
}

const TAIL_LEN: usize = 400;

impl PeriodicKernel {
    pub fn new(period: f64) -> Self {
        Self::with_cutoff(period, 4)
    }

    pub fn with_cutoff(period: f64, cutoff: usize) -> Self {
        let q = cutoff as f64 + 1.0;
        let mut tail = vec![C::new(0.0, 0.0); TAIL_LEN];
        // (-iL)^(-s) = (i/L)^s
        let mut pw = C::new(1.0, 0.0);
        let il = C::new(0.0, 1.0 / period);
        for (s, c) in tail.iter_mut().enumerate() {
            if s >= 2 && s % 2 == 0 {
                let z = hurwitz_zeta(s as u32, q);
                *c = pw * (2.0 * z);
            }
            pw *= il;
        }
        PeriodicKernel { period, cutoff, tail }
    }

    /// Reduces `Im zeta` into `[-L/2, L/2)`.
    pub fn reduce(&self, zeta: C) -> C {
        let l = self.period;
        let k = (zeta.im / l + 0.5).floor();
        C::new(zeta.re, zeta.im - k * l)
    }

    fn check(&self, zeta: C) -> Result<C> {
        let z = self.reduce(zeta);
        if !(z.norm() > 1e-14 * self.period) {
            return Err(Error::Domain("periodized element evaluated on a lattice image of its source".into()));
        }
        Ok(z)
    }

    /// `f_m(zeta)` for `m = 0..=mmax` (entry 0 unused, set to zero).
    pub fn multipoles(&self, zeta: C, mmax: usize) -> Result<Vec<C>> {
        let z = self.check(zeta)?;
        if z.re.abs() >= self.period {
            Ok(self.far_multipoles(z, mmax))
        } else {
            Ok(self.near_multipoles(z, mmax))
        }
    }

    fn near_multipoles(&self, z: C, mmax: usize) -> Vec<C> {
        let l = self.period;
        let kk = self.cutoff as i64;
        let mut f = vec![C::new(0.0, 0.0); mmax + 1];
        for n in -kk..=kk {
            let w = (z - C::new(0.0, n as f64 * l)).inv();
            let mut pw = w;
            for fm in f.iter_mut().skip(1) {
                *fm += pw;
                pw *= w;
            }
        }
        for m in 1..=mmax {
            // Crude bound on the m-th tail; once it is negligible for the
            // direct part, all higher orders are too.
            let bound = 2.0 * ((kk as f64 + 1.0) * l - z.norm()).powi(-(m as i32)) * (kk as f64 + 2.0);
            if bound < 1e-18 * f[m].norm() {
                break;
            }
            f[m] += self.tail_sum(m, z);
        }
        f
    }

    fn far_multipoles(&self, z: C, mmax: usize) -> Vec<C> {
        if z.re < 0.0 {
            let mut f = self.far_multipoles(-z, mmax);
            for (m, fm) in f.iter_mut().enumerate() {
                if m % 2 == 1 {
                    *fm = -*fm;
                }
            }
            return f;
        }
        let l = self.period;
        let lnf = ln_factorials();
        let a = 2.0 * PI / l;
        let expo = -a * z; // log of q = exp(-2 pi z / L)
        let mut f = vec![C::new(0.0, 0.0); mmax + 1];
        for m in 1..=mmax {
            let pre = m as f64 * a.ln() - lnf[m - 1];
            let mut acc = C::new(0.0, 0.0);
            let peak = ((m as f64 - 1.0) / (-expo.re)).ceil() as usize + 1;
            let mut k = 1usize;
            loop {
                let kf = k as f64;
                let e = pre + (m as f64 - 1.0) * kf.ln() + kf * expo;
                let term = e.exp();
                acc += term;
                if k > peak && term.norm() < 1e-18 * acc.norm() {
                    break;
                }
                if k > 4000 {
                    break;
                }
                k += 1;
            }
            if m == 1 {
                acc += PI / l;
            }
            f[m] = acc;
        }
        f
    }

    /// `log|(L/pi) sinh(pi zeta / L)|` with its complex derivative `f_1`.
    pub fn log_sinh(&self, zeta: C) -> Result<(C, C)> {
        let z = self.check(zeta)?;
        let l = self.period;
        let w = z * (PI / l);
        let val = if w.re.abs() > 18.0 {
            let s = if w.re > 0.0 { 1.0 } else { -1.0 };
            // sinh w = s e^{s w} (1 - e^{-2 s w}) / 2
            let e = (-2.0 * s * w).exp();
            C::new(s * w.re - std::f64::consts::LN_2, 0.0) + (C::new(1.0, 0.0) - e).ln()
        } else {
            w.sinh().ln()
        };
        let val = val + (l / PI).ln();
        let f1 = self.multipoles(z, 1)?[1];
        Ok((val, f1))
    }

    /// Scaled periodized bipolar family for pole `b` and partner `a`,
    /// `d = b - a`, `zeta = z - b`:
    /// `g_k = s^k sum_n [(1 + d/(zeta - i n L))^k - 1]` for `k = 1..=kmax`,
    /// returned with derivatives (entry 0 unused).
    pub fn bipolar(&self, zeta: C, d: C, s: f64, kmax: usize) -> Result<(Vec<C>, Vec<C>)> {
        let z = self.check(zeta)?;
        let mut g = vec![C::new(0.0, 0.0); kmax + 1];
        let mut dg = vec![C::new(0.0, 0.0); kmax + 1];
        if z.re.abs() >= self.period {
            // Finite multipole expansion about b, exact.
            let jmax = kmax + 1;
            let f = self.far_multipoles(z, jmax);
            for k in 1..=kmax {
                let sk = s.powi(k as i32);
                let mut c = C::new(sk, 0.0);
                let mut acc = C::new(0.0, 0.0);
                let mut dacc = C::new(0.0, 0.0);
                for j in 1..=k {
                    c *= d * ((k - j + 1) as f64 / j as f64);
                    let t = c * f[j];
                    acc += t;
                    dacc += c * f[j + 1] * (-(j as f64));
                    if j > 3 && t.norm() < 1e-18 * acc.norm() && (c * f[j + 1]).norm() < 1e-18 * acc.norm() {
                        break;
                    }
                }
                g[k] = acc;
                dg[k] = dacc;
            }
            return Ok((g, dg));
        }
        let l = self.period;
        let kk = self.cutoff as i64;
        for n in -kk..=kk {
            let zn = z - C::new(0.0, n as f64 * l);
            let u = d / zn;
            let w = C::new(1.0, 0.0) + u;
            let du = -u / zn; // d/dzeta of d/zn
            let sw = w * s;
            let mut a_k = C::new(0.0, 0.0);
            let mut p_k = C::new(1.0, 0.0);
            for k in 1..=kmax {
                // a_k = s^k sum_{j<k} w^j, p_{k-1} = (s w)^(k-1)
                a_k = (a_k + p_k) * s;
                g[k] += u * a_k;
                dg[k] += p_k * (s * k as f64) * du;
                p_k *= sw;
            }
        }
        // Tail from |n| > K through the lattice-tail multipoles.
        let jmax = kmax.min(60);
        let tails = self.tail_multipoles(z, jmax + 1);
        for k in 1..=kmax {
            let sk = s.powi(k as i32);
            let mut c = C::new(sk, 0.0);
            let mut acc = C::new(0.0, 0.0);
            let mut dacc = C::new(0.0, 0.0);
            for j in 1..=k.min(jmax) {
                c *= d * ((k - j + 1) as f64 / j as f64);
                let t = c * tails[j];
                acc += t;
                dacc += c * tails[j + 1] * (-(j as f64));
                if j > 2 && c.norm() * tails[j].norm().max(tails[j + 1].norm()) < 1e-18 * (g[k].norm() + acc.norm())
                    && (c.norm() < 1.0 || tails[j].norm() == 0.0) {
                        break;
                    }
            }
            g[k] += acc;
            dg[k] += dacc;
        }
        Ok((g, dg))
    }

    /// `sum_{|n| > K} (zeta - i n L)^(-m)` for `m = 0..=mmax`.
    fn tail_multipoles(&self, z: C, mmax: usize) -> Vec<C> {
        let mut f = vec![C::new(0.0, 0.0); mmax + 1];
        for (m, fm) in f.iter_mut().enumerate().skip(1) {
            *fm = self.tail_sum(m, z);
        }
        f
    }

    /// `sum_t binom(m+t-1, t) (-z)^t c[m+t]`; only even `m+t` contribute.
    fn tail_sum(&self, m: usize, z: C) -> C {
        let r = z.norm() / ((self.cutoff as f64 + 1.0) * self.period);
        let mz = -z;
        let mut acc = C::new(0.0, 0.0);
        let mut binom = 1.0;
        let mut zt = C::new(1.0, 0.0);
        let mut t = 0usize;
        while m + t < TAIL_LEN {
            if (m + t).is_multiple_of(2) {
                let term = zt * self.tail[m + t] * binom;
                acc += term;
                let past_peak = (m + t) as f64 * r < (t + 1) as f64;
                if t > 1 && past_peak && term.norm() <= 1e-18 * acc.norm() {
                    break;
                }
                if self.tail[m + t].norm() == 0.0 {
                    break;
                }
            }
            binom *= (m + t) as f64 / (t + 1) as f64;
            zt *= mz;
            t += 1;
        }
        acc
    }
}

/// Route used by the solver: lattice sums.
pub fn periodized_multipole(p: Point, src: Point, period: f64, order: u32, parity: Parity) -> Result<(f64, [f64; 2])> {
    let k = PeriodicKernel::new(period);
    let zeta = p.z() - src.z();
    if order == 0 {
        let (v, d) = k.log_sinh(zeta)?;
        return Ok(split(v, d, parity));
    }
    let m = order as usize;
    let f = k.multipoles(zeta, m + 1)?;
    Ok(split(f[m], f[m + 1] * (-(m as f64)), parity))
}

/// Symmetric partial image sum over `|n| <= n_images`. For `m = 0` each
/// image is normalized by `-log|n L|`, the convention under which the
/// sum converges to `log|(L/pi) sinh(pi zeta/L)|`.
pub fn periodized_partial_sum(p: Point, src: Point, period: f64, order: u32, parity: Parity, n_images: i64) -> Result<(f64, [f64; 2])> {
    let mut v = 0.0;
    let mut g = [0.0, 0.0];
    for n in -n_images..=n_images {
        let s = Point::new(src.x, src.y + n as f64 * period);
        let (vn, gn) = freespace_multipole(p, s, order, parity)?;
        v += vn;
        if order == 0 && n != 0 {
            v -= (n.unsigned_abs() as f64 * period).ln();
        }
        g[0] += gn[0];
        g[1] += gn[1];
    }
    Ok((v, g))
}

pub const COTH_MAX_ORDER: usize = 64;

/// Coefficients of `P_m` with `f_m = (pi/L)^m P_m(coth(pi zeta/L))`.
/// `P_1 = c`, `P_{m+1} = P_m'(c) (c^2 - 1) / m`.
fn coth_polys() -> &'static [Vec<f64>] {
    static T: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    T.get_or_init(|| {
        let mut polys: Vec<Vec<f64>> = vec![vec![], vec![0.0, 1.0]];
        for m in 1..COTH_MAX_ORDER {
            let p = &polys[m];
            let dp: Vec<f64> = (1..p.len()).map(|i| p[i] * i as f64).collect();
            let mut next = vec![0.0; dp.len() + 2];
            for (i, c) in dp.iter().enumerate() {
                next[i + 2] += c / m as f64;
                next[i] -= c / m as f64;
            }
            polys.push(next);
        }
        polys
    })
}

fn horner(p: &[f64], c: C) -> C {
    p.iter().rev().fold(C::new(0.0, 0.0), |acc, &a| acc * c + a)
}

fn coth_safe(w: C) -> C {
    let s = if w.re >= 0.0 { 1.0 } else { -1.0 };
    let e = (-2.0 * s * w).exp();
    (C::new(1.0, 0.0) + e) / (C::new(1.0, 0.0) - e) * s
}

/// Independent route through the coth-derivative polynomials, orders
/// `1..=COTH_MAX_ORDER`. Within `L/10` of the source the free-space term is
/// split off and the smooth remainder is taken from the full lattice
/// constants.
pub fn periodized_multipole_coth(p: Point, src: Point, period: f64, order: u32, parity: Parity) -> Result<(f64, [f64; 2])> {
    let m = order as usize;
    if m == 0 || m >= COTH_MAX_ORDER {
        return Err(Error::Domain(format!("coth route supports orders 1..{}", COTH_MAX_ORDER - 1)));
    }
    let k0 = PeriodicKernel::with_cutoff(period, 0);
    let zeta = k0.check(p.z() - src.z())?;
    if zeta.norm() < period / 10.0 {
        let f = k0.near_multipoles(zeta, m + 1);
        return Ok(split(f[m], f[m + 1] * (-(m as f64)), parity));
    }
    let a = PI / period;
    let c = coth_safe(zeta * a);
    let polys = coth_polys();
    let fm = horner(&polys[m], c) * a.powi(m as i32);
    let fm1 = horner(&polys[m + 1], c) * a.powi(m as i32 + 1);
    Ok(split(fm, fm1 * (-(m as f64)), parity))
}

/// Fourier mode `c_plus e^{kx} cos(ky + phase) + c_minus e^{-kx} cos(ky + phase)`,
/// `k = 2 pi j / L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub j: u32,
    pub c_plus: f64,
    pub c_minus: f64,
    pub phase: f64,
}

/// Harmonic background `H = c + a x + b y + modes` with a `(2+delta)`-periodic gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundField {
    pub constant: f64,
    pub a: f64,
    pub b: f64,
    pub modes: Vec<Mode>,
    /// Period the mode wavenumbers refer to.
    pub period: f64,
}

impl BackgroundField {
    pub fn linear(a: f64, b: f64) -> Self {
        BackgroundField { constant: 0.0, a, b, modes: Vec::new(), period: 2.0 }
    }

    pub fn zero() -> Self {
        Self::linear(0.0, 0.0)
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.modes.push(mode);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0
            && self.a == 0.0
            && self.b == 0.0
            && self.modes.iter().all(|m| m.c_plus == 0.0 && m.c_minus == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.constant *= s;
        out.a *= s;
        out.b *= s;
        for m in &mut out.modes {
            m.c_plus *= s;
            m.c_minus *= s;
        }
        out
    }

    /// Complex potential with `H = Re G`, and `G'`.
    pub fn potential(&self, p: Point) -> (C, C) {
        let z = p.z();
        let lin = C::new(self.a, -self.b);
        let mut g = lin * z + self.constant;
        let mut dg = lin;
        for m in &self.modes {
            let k = 2.0 * PI * m.j as f64 / self.period;
            let ph = C::from_polar(1.0, m.phase);
            let ep = (z * k).exp() * ph * m.c_plus;
            let em = (-z * k).exp() * ph.conj() * m.c_minus;
            g += ep + em;
            dg += (ep - em) * k;
        }
        (g, dg)
    }

    /// Parses expressions such as `x`, `-y`, `x+2y`, `0.5x - 3y + 1` and
    /// `y + mode(1, 0.2, 0.1, 0)` where a mode is `mode(j, c_plus, c_minus, phase)`.
    pub fn parse(text: &str, period: f64) -> Result<Self> {
        let mut h = BackgroundField::zero().with_period(period);
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(Error::Parse("empty field expression".into()));
        }
        let bytes = s.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let mut sign = 1.0;
            while i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                if bytes[i] == b'-' {
                    sign = -sign;
                }
                i += 1;
            }
            let start = i;
            if s[i..].starts_with("mode(") {
                let close = s[i..].find(')').ok_or_else(|| Error::Parse("unclosed mode(".into()))? + i;
                let args: Vec<&str> = s[i + 5..close].split(',').collect();
                if args.len() != 4 {
                    return Err(Error::Parse("mode takes (j, c_plus, c_minus, phase)".into()));
                }
                let num = |t: &str| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?} in mode")));
                let j: u32 = args[0].parse().map_err(|_| Error::Parse(format!("bad mode index {:?}", args[0])))?;
                if j == 0 {
                    return Err(Error::Parse("mode index must be positive".into()));
                }
                h.modes.push(Mode { j, c_plus: sign * num(args[1])?, c_minus: sign * num(args[2])?, phase: num(args[3])? });
                i = close + 1;
                continue;
            }
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.' || bytes[i] == b'e' && i > start && i + 1 < bytes.len() && (bytes[i + 1].is_ascii_digit() || bytes[i + 1] == b'-')) {
                if bytes[i] == b'e' && i + 1 < bytes.len() && bytes[i + 1] == b'-' {
                    i += 1;
                }
                i += 1;
            }
            let coef = if i > start {
                s[start..i].parse::<f64>().map_err(|_| Error::Parse(format!("bad coefficient {:?}", &s[start..i])))?
            } else {
                1.0
            };
            if i > start && i < bytes.len() && bytes[i] == b'*' {
                i += 1;
            }
            match bytes.get(i) {
                Some(b'x') => {
                    h.a += sign * coef;
                    i += 1;
                }
                Some(b'y') => {
                    h.b += sign * coef;
                    i += 1;
                }
                Some(b'+') | Some(b'-') | None if i > start => h.constant += sign * coef,
                _ => return Err(Error::Parse(format!("unexpected input at {:?}", &s[i.min(s.len())..]))),
            }
        }
        Ok(h)
    }
}

pub fn eval_background(h: &BackgroundField, p: Point) -> (f64, [f64; 2]) {
    let (g, dg) = h.potential(p);
    split(g, dg, Parity::Cos)
}
