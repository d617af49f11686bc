mod common;

use common::segment_cases;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rollball::cost::power_cost;
use rollball::linalg::{random_in_box, random_orthonormal_pair, random_unit};
use rollball::mtw::{default_step, mtw_contraction, MtwSample};

#[test]
fn contraction_and_segment_derivative_agree() {
    for (p, seed) in [(-2.0, 3), (-1.0, 4)] {
        for (i, case) in segment_cases(p, 50, seed).iter().enumerate() {
            assert!(case.relative_gap() <= 1e-3, "p={p} case {i}: {case:?}");
        }
    }
}

#[test]
fn inverse_one_segments_are_strictly_convex() {
    for case in segment_cases(-1.0, 50, 8) {
        assert!(case.segment > 0.0, "{case:?}");
    }
}

/// For `p = -2` in the plane, `A(P) = |P|^{4/3} (I - 4 P^ P^T)`, so with
/// `u = P.xi`, `w = P.eta`, `r2 = u^2 + w^2` the second derivative of
/// `xi^T A xi` along `eta` is a closed expression in `(u, w)`.
fn inverse_square_contraction(u: f64, w: f64) -> f64 {
    let r2 = u * u + w * w;
    4.0 / 3.0 * r2.powf(-1.0 / 3.0)
        - 8.0 / 9.0 * w * w * r2.powf(-4.0 / 3.0)
        - 4.0 * u * u * (-2.0 / 3.0 * r2.powf(-4.0 / 3.0) + 16.0 / 9.0 * w * w * r2.powf(-7.0 / 3.0))
}

#[test]
fn inverse_square_contraction_matches_closed_expression() {
    let model = power_cost(-2.0, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let x = random_in_box(&mut rng, 2, 2.0);
        let p = random_unit(&mut rng, 2) * rng.random_range(0.2..5.0);
        let (xi, eta) = random_orthonormal_pair(&mut rng, 2);
        let exact = inverse_square_contraction(p.dot(&xi), p.dot(&eta));
        let sample = MtwSample::new(x, p.clone(), xi, eta).unwrap();
        let got = mtw_contraction(&model, &sample, default_step(&p)).unwrap();
        assert!((got - exact).abs() <= 1e-6 * exact.abs() + 1e-9, "{got} vs {exact}");
        assert!(
            exact >= -1e-12,
            "the closed expression is a nonnegative square multiple"
        );
    }
}
