use std::f64::consts::PI;

use bubbler_core::geometry::{Loc, Point};
use bubbler_core::quadrature::{
    exterior_tail_regular, exterior_tail_singular, refine_until, Layout, QuadParams, QuadratureScheme,
};

fn singular_density(loc: &Loc, kappa: f64, a: f64) -> f64 {
    let r2 = loc.dist_sq_to(0, Point::ORIGIN);
    8.0 * kappa * kappa * a * r2.powf(kappa - 1.0) / (a + r2.powf(kappa)).powi(2)
}

fn regular_density(loc: &Loc, c: Point, a: f64) -> f64 {
    let d2 = loc.dist_sq_to(1, c);
    8.0 * a / (a + d2).powi(2)
}

#[test]
fn singular_bubble_mass() {
    for alpha in [-0.5, 0.5, 1.5, 2.5] {
        let kappa: f64 = 1.0 + alpha;
        for scale in [1e-2, 1e-3, 1e-4] {
            let a: f64 = scale * scale;
            let layout = Layout {
                p: Point::ORIGIN,
                kappa,
                width0: scale.powf(1.0 / kappa),
                bubbles: vec![(Point::new(0.3, 0.2), 1e-3)],
                boundary_layer: 0.0,
            };
            let s = QuadratureScheme::build(&layout, &QuadParams::default()).unwrap();
            let m = s.integrate(|l| singular_density(l, kappa, a)).unwrap()
                + exterior_tail_singular(kappa, layout.width0);
            let want = 8.0 * PI * kappa;
            assert!((m / want - 1.0).abs() < 1e-6, "alpha {alpha} scale {scale}: {m} vs {want}");
        }
    }
}

#[test]
fn regular_bubble_mass() {
    let c = Point::new(0.3, 0.2);
    for scale in [1e-2, 1e-3, 1e-4] {
        let layout = Layout {
            p: Point::ORIGIN,
            kappa: 1.5,
            width0: 1e-3,
            bubbles: vec![(c, scale)],
            boundary_layer: 0.0,
        };
        let s = QuadratureScheme::build(&layout, &QuadParams::default()).unwrap();
        let m = s.integrate(|l| regular_density(l, c, scale * scale)).unwrap()
            + exterior_tail_regular(c, scale);
        assert!((m / (8.0 * PI) - 1.0).abs() < 1e-8, "scale {scale}: {m}");
    }
}

#[test]
fn linearity_and_determinism() {
    let c = Point::new(-0.2, 0.25);
    let layout = Layout {
        p: Point::ORIGIN,
        kappa: 1.5,
        width0: 1e-2,
        bubbles: vec![(c, 1e-3)],
        boundary_layer: 0.01,
    };
    let s = QuadratureScheme::build(&layout, &QuadParams::default()).unwrap();
    let f = |l: &Loc| regular_density(l, c, 1e-6);
    let g = |l: &Loc| (l.x.x * 3.0).sin() + l.x.norm_sq();
    let (a, b) = (2.5, -0.75);
    let lhs = s.integrate(|l| a * f(l) + b * g(l)).unwrap();
    let rhs = a * s.integrate(f).unwrap() + b * s.integrate(g).unwrap();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
    let again = QuadratureScheme::build(&layout, &QuadParams::default()).unwrap();
    assert_eq!(s.integrate(f).unwrap().to_bits(), again.integrate(f).unwrap().to_bits());
}

#[test]
fn refinement_of_smooth_and_singular_integrands() {
    let layout = Layout {
        p: Point::ORIGIN,
        kappa: 0.1,
        width0: 1.0,
        bubbles: vec![],
        boundary_layer: 0.0,
    };
    let start = QuadParams {
        angles: 32,
        ..QuadParams::default()
    };
    let g = refine_until(|l| (-4.0 * l.x.norm_sq()).exp(), &layout, &start, 1e-10, 10_000_000).unwrap();
    assert!(g.converged && g.levels <= 4);
    assert!((g.value - PI / 4.0 * (1.0 - (-4.0f64).exp())).abs() < 1e-10);
    let moment = refine_until(
        |l| l.dist_sq_to(0, Point::ORIGIN).powf(-0.9),
        &layout,
        &start,
        1e-8,
        10_000_000,
    )
    .unwrap();
    assert!((moment.value / (PI / 0.1) - 1.0).abs() < 1e-6);
    assert!(refine_until(|_| 1.0, &layout, &start, 1e-13, 1000).is_err());
}
