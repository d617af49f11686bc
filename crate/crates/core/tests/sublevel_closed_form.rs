mod common;

use common::closed_form_cases;
use rollball::geometry::{ray_hit, Convexity};
use rollball::sublevel::{build_sublevel_psi, tangential_hessian_min, trace_level_curve_2d, SublevelSpec};

#[test]
fn closed_form_matches_difference_hessian() {
    for (i, c) in closed_form_cases(500, 17).iter().enumerate() {
        let rel = (c.closed - c.difference).abs() / c.difference.abs().max(1e-300);
        assert!(rel <= 1e-6, "point {i} {c:?}: relative gap {rel:e}");
    }
}

#[test]
fn sign_rule_and_swap() {
    for c in closed_form_cases(300, 18) {
        if c.a >= 0.0 {
            assert!(c.closed <= 1e-9, "{c:?}");
        } else {
            assert!(c.swapped <= 1e-9, "{c:?}");
            assert!(c.closed >= -1e-9, "{c:?}");
        }
        assert!((c.closed + c.swapped).abs() <= 1e-9 * (1.0 + c.closed.abs()), "{c:?}");
    }
}

#[test]
fn example_curves_are_convex_after_orientation() {
    for i in 0..3 {
        let built = build_sublevel_psi(&SublevelSpec::example_set(i).unwrap()).unwrap();
        let seed = ray_hit(&built.surface, &common::v(&[1.0, 0.0])).unwrap();
        let curve = trace_level_curve_2d(&built.surface, &seed, 0.01).unwrap();
        assert!(curve.closed);
        assert_eq!(
            rollball::geometry::polyline_convexity(&curve).unwrap(),
            Convexity::Convex
        );
        let stride = (curve.len() / 200).max(1);
        for k in (0..curve.len()).step_by(stride) {
            assert!(tangential_hessian_min(&built.surface, &curve.vertex(k)).unwrap() >= -1e-9);
        }
    }
}
