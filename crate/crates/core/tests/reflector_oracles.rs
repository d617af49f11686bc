use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rollball::linalg::random_in_box;
use rollball::reflector::{
    align_paraboloid_tangency, contact_residuals, matched_curvature_margin, paraboloid_eval, reflector_inclusion,
    sff_consistency_gap, GridSampler, Paraboloid,
};
use rollball::Vector;

fn random_paraboloid(rng: &mut ChaCha8Rng, n: usize) -> Paraboloid {
    let z = random_in_box(rng, n, 2.0).iter().copied().collect();
    Paraboloid::new(rng.random_range(0.2..3.0), z, rng.random_range(-1.0..1.0)).unwrap()
}

#[test]
fn gradient_matches_difference_quotient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let par = random_paraboloid(&mut rng, 2);
        let x = random_in_box(&mut rng, 2, 5.0);
        let (_, g) = paraboloid_eval(&par, &x).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (par.value(&xp).unwrap() - par.value(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-8 * (1.0 + g[i].abs()));
        }
    }
}

#[test]
fn analytic_form_matches_implicit_graph_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [1, 2, 3] {
        for _ in 0..40 {
            let par = random_paraboloid(&mut rng, n);
            let x = random_in_box(&mut rng, n, 4.0);
            assert!(sff_consistency_gap(&par, &x).unwrap() <= 1e-6);
        }
    }
}

#[test]
fn tangency_residuals_vanish() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let par2 = random_paraboloid(&mut rng, 2);
        let x_c = random_in_box(&mut rng, 2, 3.0);
        let par1 = align_paraboloid_tangency(rng.random_range(0.1..4.0), &par2, &x_c).unwrap();
        let (dv, dg) = contact_residuals(&par1, &par2, &x_c).unwrap();
        assert!(
            dv <= 1e-12 * (1.0 + par2.value(&x_c).unwrap().abs()) && dg <= 1e-12,
            "{dv:e} {dg:e}"
        );
    }
}

#[test]
fn sigma_order_equals_curvature_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probes: Vec<Vector> = (0..10).map(|_| random_in_box(&mut rng, 2, 2.0)).collect();
    for _ in 0..30 {
        let par2 = random_paraboloid(&mut rng, 2);
        let x_c = random_in_box(&mut rng, 2, 2.0);
        let par1 = align_paraboloid_tangency(rng.random_range(0.1..4.0), &par2, &x_c).unwrap();
        let margin = matched_curvature_margin(&par1, &par2, &probes).unwrap();
        assert_eq!(
            par1.sigma <= par2.sigma,
            margin >= -1e-9,
            "sigma {} vs {}: {margin}",
            par1.sigma,
            par2.sigma
        );
    }
}

#[test]
fn dominant_pairs_are_ordered_on_the_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = GridSampler {
        half_width: 5.0,
        points_per_axis: 41,
    };
    for _ in 0..30 {
        let par2 = random_paraboloid(&mut rng, 2);
        let x_c = random_in_box(&mut rng, 2, 2.0);
        let sigma1 = par2.sigma * rng.random_range(0.2..1.0);
        let par1 = align_paraboloid_tangency(sigma1, &par2, &x_c).unwrap();
        let verdict = reflector_inclusion(&par1, &par2, &x_c, &grid).unwrap();
        assert!(verdict.sigma_dominance && verdict.ordering_holds, "{verdict:?}");
        assert!(verdict.normal_factor_residual <= 1e-12);
    }
}
