//! Randomized invariants of geometry, basis functions and solutions.

use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use tworow::asymptotics::{image_point, tilde_phi_closed};
use tworow::cell_solver::{eval, CellSolution};
use tworow::geometry::*;
use tworow::harmonic_basis::{periodized_multipole, BackgroundField, Parity};
use tworow::verify::solve_two_row;

fn cfg() -> CellConfig {
    CellConfig::new(0.1, 0.1).unwrap()
}

/// Solutions for `H = x` and `H = y` on the template cell.
fn basis_solutions() -> &'static (CellSolution, CellSolution) {
    static SOLS: OnceLock<(CellSolution, CellSolution)> = OnceLock::new();
    SOLS.get_or_init(|| {
        let c = cfg();
        (solve_two_row(&c, &BackgroundField::linear(1.0, 0.0)).unwrap(), solve_two_row(&c, &BackgroundField::linear(0.0, 1.0)).unwrap())
    })
}

fn exterior_point() -> impl Strategy<Value = Point> {
    (-3.5f64..3.5, -1.05f64..1.05).prop_map(|(x, y)| Point::new(x, y)).prop_filter("exterior", |p| boundary_distance(*p, &cfg()) > 0.05)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn image_points_are_inverse_on_both_circles(gap in 1e-3f64..0.5, t in 0.0f64..(2.0 * PI)) {
        let pair = image_point(gap).unwrap();
        let (a, b) = pair.points();
        let c = 1.0 + gap / 2.0;
        let ratio = |q: Point| q.dist(a) / q.dist(b);
        let right = Point::new(c + t.cos(), t.sin());
        let left = Point::new(-c + t.cos(), t.sin());
        let on_right = ratio(right).ln();
        let on_left = ratio(left).ln();
        prop_assert!((on_right - pair.xi0()).abs() < 1e-10);
        prop_assert!((on_left + pair.xi0()).abs() < 1e-10);
    }

    #[test]
    fn config_kv_round_trip(eps in 1e-3f64..0.999, delta in 1e-3f64..0.999, m in 3.0f64..10.0) {
        let c = CellConfig::with_m(eps, delta, m).unwrap();
        prop_assert_eq!(CellConfig::parse_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn reduce_to_cell_lands_in_reference_cell(x in -5.0f64..5.0, y in -50.0f64..50.0) {
        let c = cfg();
        let (q, n) = reduce_to_cell(Point::new(x, y), &c);
        prop_assert!(q.y.abs() <= c.period() / 2.0 + 1e-12);
        prop_assert!((q.y + n as f64 * c.period() - y).abs() < 1e-12);
    }

    #[test]
    fn linear_fields_parse(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let h = BackgroundField::parse(&format!("{a}x + {b}y"), 2.1).unwrap();
        prop_assert_eq!((h.a, h.b, h.constant), (a, b, 0.0));
    }

    #[test]
    fn periodized_multipole_gradient_matches_differences(p in exterior_point(), order in 0u32..6, sin in any::<bool>()) {
        let src = Point::new(1.05, 0.0);
        prop_assume!(p.dist(src) > 0.3);
        let parity = if sin { Parity::Sin } else { Parity::Cos };
        let f = |q: Point| periodized_multipole(q, src, 2.1, order, parity).unwrap();
        let (v, g) = f(p);
        let h = 1e-5;
        let gx = (f(Point::new(p.x + h, p.y)).0 - f(Point::new(p.x - h, p.y)).0) / (2.0 * h);
        let gy = (f(Point::new(p.x, p.y + h)).0 - f(Point::new(p.x, p.y - h)).0) / (2.0 * h);
        let s = g[0].hypot(g[1]).max(v.abs()).max(1.0);
        prop_assert!((gx - g[0]).abs() / s < 1e-7 && (gy - g[1]).abs() / s < 1e-7);
        // Gradients repeat with the period.
        let g1 = f(Point::new(p.x, p.y + 2.1)).1;
        prop_assert!((g1[0] - g[0]).abs() / s < 1e-9 && (g1[1] - g[1]).abs() / s < 1e-9);
    }

    #[test]
    fn image_array_field_is_periodic(p in exterior_point()) {
        let c = cfg();
        let (v0, g0) = tilde_phi_closed(p, &c).unwrap();
        let (v1, g1) = tilde_phi_closed(Point::new(p.x, p.y + c.period()), &c).unwrap();
        prop_assert!((v1 - v0).abs() < 1e-10);
        prop_assert!((g1[0] - g0[0]).abs() < 1e-9 && (g1[1] - g0[1]).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn correction_is_linear_in_the_field(a in -3.0f64..3.0, b in -3.0f64..3.0, p in exterior_point()) {
        let (sx, sy) = basis_solutions();
        let c = cfg();
        let combo = solve_two_row(&c, &BackgroundField::linear(a, b)).unwrap();
        let (vx, gx) = eval(sx, p).unwrap();
        let (vy, gy) = eval(sy, p).unwrap();
        let (v, g) = eval(&combo, p).unwrap();
        let s = 1.0 + a.abs() + b.abs();
        prop_assert!((v - a * vx - b * vy).abs() / s < 1e-9);
        prop_assert!((g[0] - a * gx[0] - b * gy[0]).abs() / s < 1e-8);
        prop_assert!((g[1] - a * gx[1] - b * gy[1]).abs() / s < 1e-8);
    }

    #[test]
    fn odd_field_gives_odd_potential(p in exterior_point()) {
        let (sx, _) = basis_solutions();
        let (v, _) = eval(sx, p).unwrap();
        let (w, _) = eval(sx, Point::new(-p.x, p.y)).unwrap();
        let (u, _) = eval(sx, Point::new(p.x, -p.y)).unwrap();
        prop_assert!((v + w).abs() < 1e-9);
        prop_assert!((v - u).abs() < 1e-9);
    }

    #[test]
    fn solution_survives_json(p in exterior_point()) {
        let (_, sy) = basis_solutions();
        let back: CellSolution = serde_json::from_str(&serde_json::to_string(sy).unwrap()).unwrap();
        prop_assert_eq!(eval(&back, p).unwrap(), eval(sy, p).unwrap());
    }
}
