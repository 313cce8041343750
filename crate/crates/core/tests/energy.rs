use std::f64::consts::PI;

use proptest::prelude::*;

use bubbler_core::ansatz::AnsatzFields;
use bubbler_core::domain::{DiskDomain, HSpec};
use bubbler_core::energy::{
    energy_quadrature, expansion_gap, leading_order_correction, maximize_reduced, objective_gradient,
    objective_value, polygon_bound, polygon_config, surrogate, MaximizeOptions, Objective,
};
use bubbler_core::geometry::Point;
use bubbler_core::params::{build_config, in_configuration_space, ProblemSpec};
use bubbler_core::quadrature::QuadratureScheme;

fn spec(alpha: f64, m: usize, t: f64) -> ProblemSpec {
    ProblemSpec::new(alpha, m, t, HSpec::Zero).unwrap()
}

/// Best value over antipodal pairs `(r, 0), (−r, 0)` on a fine radius grid.
fn antipodal_grid_search(s: &ProblemSpec) -> (f64, f64) {
    let (lo, hi) = (0.5 * s.separation(), s.d);
    (0..=20_000)
        .map(|k| lo + (hi - lo) * k as f64 / 20_000.0)
        .map(|r| {
            let v = surrogate(s, &[Point::new(r, 0.0), Point::new(-r, 0.0)], &DiskDomain).total;
            (r, v)
        })
        .filter(|(r, _)| in_configuration_space(s, &[Point::new(*r, 0.0), Point::new(-*r, 0.0)], &DiskDomain).admissible)
        .fold((f64::NAN, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

#[test]
fn two_centers_form_antipodal_pair_matching_grid_search() {
    for (alpha, t) in [(0.0, 100.0), (0.5, 200.0), (-0.5, 80.0)] {
        let s = spec(alpha, 2, t);
        let r = maximize_reduced(&s, &DiskDomain, &MaximizeOptions::default()).unwrap();
        let (ra, rb) = (r.xi_star[0].norm(), r.xi_star[1].norm());
        assert!((ra - rb).abs() < 1e-5 * ra, "radii {ra} {rb}");
        assert!((r.xi_star[0] + r.xi_star[1]).norm() < 1e-5 * ra, "{:?}", r.xi_star);
        let (r_grid, v_grid) = antipodal_grid_search(&s);
        assert!(r.surrogate_value >= v_grid - 1e-9 * v_grid.abs(), "{} < {v_grid}", r.surrogate_value);
        assert!((ra / r_grid - 1.0).abs() < 1e-3, "radius {ra} vs grid {r_grid}");
    }
}

#[test]
fn interior_maximizers_across_parameters() {
    for alpha in [-0.5, 0.0, 0.5, 1.5] {
        for (m, t) in [(1, 60.0), (1, 150.0), (2, 100.0), (3, 150.0)] {
            let s = spec(alpha, m, t);
            let r = maximize_reduced(&s, &DiskDomain, &MaximizeOptions::default()).unwrap();
            assert!(r.converged, "α={alpha} m={m} t={t}");
            assert!(r.interior_flag, "α={alpha} m={m} t={t}: {:?}", r.active_constraints);
            assert!(in_configuration_space(&s, &r.xi_star, &DiskDomain).interior());
            assert!(r.surrogate_value >= surrogate(&s, &polygon_config(&s), &DiskDomain).total);
        }
    }
}

#[test]
fn small_ball_makes_the_constraint_active() {
    let s = spec(0.0, 1, 20.0).with_ball_radius(0.1).unwrap();
    let r = maximize_reduced(&s, &DiskDomain, &MaximizeOptions::default()).unwrap();
    assert!(!r.interior_flag);
    assert!((r.xi_star[0].norm() - 0.1).abs() < 1e-9);
}

#[test]
fn polygon_lies_in_configuration_space_and_follows_envelope() {
    for alpha in [-0.5, 0.5, 2.5] {
        for m in 1..=4 {
            for t in [50.0, 100.0, 400.0] {
                let s = spec(alpha, m, t);
                let xi = polygon_config(&s);
                assert!(in_configuration_space(&s, &xi, &DiskDomain).admissible, "α={alpha} m={m} t={t}");
                // the polygon value follows the envelope up to a t-independent constant
                let offset = |t: f64| {
                    let s = spec(alpha, m, t);
                    surrogate(&s, &polygon_config(&s), &DiskDomain).total - polygon_bound(&s)
                };
                let (c1, c2) = (offset(t), offset(4.0 * t));
                assert!((c1 - c2).abs() <= 2.0 * (m as f64).powi(2) * (8.0 * PI) / t.sqrt(), "{c1} {c2}");
            }
        }
    }
}

#[test]
fn no_centers_energy_matches_predicted_remainder() {
    let dom = DiskDomain;
    for alpha in [0.0, 0.5] {
        let s = spec(alpha, 0, 40.0);
        let table = expansion_gap(&s, |_| Vec::new(), &[40.0, 80.0, 160.0], 100_000).unwrap();
        let gaps: Vec<f64> = table.rows.iter().map(|r| (r.remainder - r.predicted_remainder).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[2] < 0.05, "{gaps:?}");
        let predicted = leading_order_correction(&s, &[], &dom).unwrap();
        let kappa = 1.0 + alpha;
        let limit = 8.0 * PI * kappa * ((8.0 * kappa * kappa).ln() - 2.0);
        assert!((predicted - limit).abs() < 1e-9, "{predicted} {limit}");
    }
}

#[test]
fn cross_energy_is_green_interaction() {
    let dom = DiskDomain;
    let s = spec(0.5, 2, 120.0);
    let xi = polygon_config(&s);
    let cfg = build_config(&s, &xi, &dom).unwrap();
    let fields = AnsatzFields::new(&s, &cfg, &dom).unwrap();
    let scheme = QuadratureScheme::for_config(&cfg, 100_000).unwrap();
    let rep = energy_quadrature(&fields, &scheme).unwrap();
    let kappa = [s.kappa(), 1.0, 1.0];
    let centers = [s.p, xi[0], xi[1]];
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let want = 8.0 * PI * kappa[i] * kappa[j] * dom.green(centers[i], centers[j]).unwrap();
            let got = rep.cross[i][j];
            assert!((got / want - 1.0).abs() < 2e-2, "({i},{j}) {got} vs {want}");
            assert!((rep.cross[i][j] - rep.cross[j][i]).abs() < 1e-6 * got.abs());
        }
    }
}

fn config_strategy() -> impl Strategy<Value = (f64, Vec<(f64, f64)>)> {
    (
        prop_oneof![Just(-0.5), Just(0.0), Just(0.5), Just(1.5)],
        prop::collection::vec((0.06..0.28f64, 0.0..(2.0 * PI)), 1..4),
    )
}

fn centers(polar: &[(f64, f64)]) -> Vec<Point> {
    polar.iter().map(|&(r, a)| Point::polar(r, a)).collect()
}

fn separated(xi: &[Point]) -> bool {
    xi.iter()
        .enumerate()
        .all(|(i, a)| xi[..i].iter().all(|b| (*a - *b).norm() > 0.05))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn surrogate_is_rotation_and_permutation_invariant((alpha, polar) in config_strategy(), theta in 0.0..(2.0 * PI)) {
        let xi = centers(&polar);
        prop_assume!(separated(&xi));
        let s = spec(alpha, xi.len(), 80.0);
        let base = surrogate(&s, &xi, &DiskDomain).total;
        let mut moved: Vec<Point> = xi.iter().map(|x| x.rotate(theta)).collect();
        moved.reverse();
        let v = surrogate(&s, &moved, &DiskDomain).total;
        prop_assert!((v - base).abs() <= 1e-11 * base.abs(), "{v} {base}");
        let c = leading_order_correction(&s, &xi, &DiskDomain).unwrap();
        let cm = leading_order_correction(&s, &moved, &DiskDomain).unwrap();
        prop_assert!((c - cm).abs() <= 1e-9 * c.abs().max(1.0));
    }

    #[test]
    fn gradients_match_finite_differences((alpha, polar) in config_strategy(), leading in any::<bool>()) {
        let xi = centers(&polar);
        prop_assume!(separated(&xi));
        let s = spec(alpha, xi.len(), 60.0);
        let objective = if leading { Objective::LeadingOrder } else { Objective::Surrogate };
        let g = objective_gradient(objective, &s, &xi, &DiskDomain).unwrap();
        let scale = g.iter().map(|p| p.norm()).fold(1.0, f64::max);
        for i in 0..xi.len() {
            for (k, e) in [Point::new(1.0, 0.0), Point::new(0.0, 1.0)].into_iter().enumerate() {
                let h = 1e-6;
                let (mut a, mut b) = (xi.clone(), xi.clone());
                a[i] = a[i] + e * h;
                b[i] = b[i] - e * h;
                let fd = (objective_value(objective, &s, &a, &DiskDomain) - objective_value(objective, &s, &b, &DiskDomain)) / (2.0 * h);
                let an = if k == 0 { g[i].x } else { g[i].y };
                prop_assert!((fd - an).abs() <= 1e-5 * scale, "{fd} {an}");
            }
        }
    }

    #[test]
    fn maximizer_beats_polygon_and_is_admissible(alpha in prop_oneof![Just(-0.5), Just(0.5)], m in 1usize..4, t in 40.0..300.0f64, seed in 0u64..1000) {
        let s = spec(alpha, m, t);
        let opts = MaximizeOptions { seed, random_starts: 2, ..MaximizeOptions::default() };
        let r = maximize_reduced(&s, &DiskDomain, &opts).unwrap();
        prop_assert!(in_configuration_space(&s, &r.xi_star, &DiskDomain).admissible);
        let seed_value = surrogate(&s, &polygon_config(&s), &DiskDomain).total;
        prop_assert!(r.surrogate_value >= seed_value - 1e-12 * seed_value.abs());
        prop_assert!(r.optimizer_trace.windows(2).all(|w| w[1].value >= w[0].value));
    }
}
