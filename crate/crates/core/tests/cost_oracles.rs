use proptest::prelude::*;
use rollball::cost::{derivatives, mixed_hessian, power_cost, solve_y_from_p, Cost, PowerCost};
use rollball::{Matrix, Vector};

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn fd_grad_x(c: &PowerCost, x: &Vector, y: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (c.value(&xp, y).unwrap() - c.value(&xm, y).unwrap()) / (2.0 * h)
    })
}

/// Column `j` is the central difference of `c_x` in `y_j`.
fn fd_hess_xy(c: &PowerCost, x: &Vector, y: &Vector, h: f64) -> Matrix {
    let mut m = Matrix::zeros(x.len(), x.len());
    for j in 0..x.len() {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[j] += h;
        ym[j] -= h;
        let col = (c.grad_x(x, &yp).unwrap() - c.grad_x(x, &ym).unwrap()) / (2.0 * h);
        m.set_column(j, &col);
    }
    m
}

fn fd_hess_xx(c: &PowerCost, x: &Vector, y: &Vector, h: f64) -> Matrix {
    let mut m = Matrix::zeros(x.len(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        m.set_column(
            j,
            &((c.grad_x(&xp, y).unwrap() - c.grad_x(&xm, y).unwrap()) / (2.0 * h)),
        );
    }
    m
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

#[test]
fn gradient_matches_difference_quotient_for_inverse_square() {
    let c = power_cost(-2.0, 2).unwrap();
    let (x, y) = (v(&[0.0, 0.0]), v(&[1.0, 0.0]));
    let fd = fd_grad_x(&c, &x, &y, 1e-6);
    let g = c.grad_x(&x, &y).unwrap();
    assert!((&g - &fd).norm() / g.norm() < 1e-6, "{g} vs {fd}");
}

#[test]
fn hessians_match_difference_quotients_across_exponents() {
    let x = v(&[0.3, -0.7, 0.2]);
    let y = v(&[-0.4, 0.5, 1.1]);
    for p in [-3.0, -2.0, -1.0, 0.5, 1.5, 2.0, 3.0] {
        let c = power_cost(p, 3).unwrap();
        let xx = c.hess_xx(&x, &y).unwrap();
        let xy = c.hess_xy(&x, &y).unwrap();
        assert!(rel(&xx, &fd_hess_xx(&c, &x, &y, 1e-5)) < 1e-7, "p={p}");
        assert!(rel(&xy, &fd_hess_xy(&c, &x, &y, 1e-5)) < 1e-7, "p={p}");
        assert!((&xx + &xy).amax() < 1e-12, "p={p}: c_xy = -c_xx for a difference cost");
    }
}

#[test]
fn third_derivative_closed_form_matches_differences() {
    let x = v(&[0.2, 0.9]);
    let y = v(&[-0.6, 0.1]);
    for p in [-2.0, 2.0] {
        let c = power_cost(p, 2).unwrap();
        let exact = c.third_yxx_analytic(&x, &y).unwrap();
        let fd = rollball::cost::third_yxx_fd(&c, &x, &y).unwrap();
        assert!(exact.max_abs_diff(&fd) <= 1e-6 * (1.0 + exact.max_abs()), "p={p}");
    }
}

#[test]
fn mixed_hessian_of_inverse_square_matches_difference_matrix() {
    let c = power_cost(-2.0, 2).unwrap();
    let (x, y) = (v(&[0.0, 0.0]), v(&[1.0, 0.0]));
    let m = mixed_hessian(&c, &x, &y).unwrap();
    let fd = fd_hess_xy(&c, &x, &y, 1e-6);
    assert!(rel(&m.c_xy, &fd) < 1e-5);
    assert!((fd.determinant() - m.det).abs() / m.det.abs() < 1e-5);
    assert!((&m.mu * &m.c_xy - Matrix::identity(2, 2)).amax() < 1e-10);
}

#[test]
fn inverse_square_inversion_by_substitution() {
    let c = power_cost(-2.0, 2).unwrap();
    let x = v(&[0.0, 0.0]);
    let p = v(&[1.0, 0.0]);
    let y = solve_y_from_p(&c, &x, &p).unwrap();
    assert!((c.grad_x(&x, &y).unwrap() - p).norm() <= 1e-10);
}

#[test]
fn bundle_is_consistent_with_trait_methods() {
    let c = power_cost(-1.0, 2).unwrap();
    let (x, y) = (v(&[0.5, 0.5]), v(&[-1.0, 0.25]));
    let b = derivatives(&c, &x, &y).unwrap();
    assert_eq!(b.c_x, c.grad_x(&x, &y).unwrap());
    assert_eq!(b.c_xx, c.hess_xx(&x, &y).unwrap());
    assert!(
        b.c_xy.clone().transpose() == b.c_xy,
        "difference costs have symmetric c_xy"
    );
}

fn coords() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inversion_round_trip(
        p in prop::sample::select(vec![-2.0, -1.0, -0.5, 0.5, 1.5, 2.0, 3.0]),
        x in coords(),
        y in coords(),
    ) {
        let (x, y) = (v(&x), v(&y));
        prop_assume!((&x - &y).norm() > 0.05);
        let c = power_cost(p, 2).unwrap();
        let momentum = c.grad_x(&x, &y).unwrap();
        let back = solve_y_from_p(&c, &x, &momentum).unwrap();
        prop_assert!((&back - &y).norm() <= 1e-8 * (1.0 + y.norm()), "p={} {} vs {}", p, back, y);
    }

    #[test]
    fn value_and_hessians_are_symmetric_in_the_pair(
        p in prop::sample::select(vec![-2.0, -1.0, 0.5, 2.0]),
        x in coords(),
        y in coords(),
    ) {
        let (x, y) = (v(&x), v(&y));
        prop_assume!((&x - &y).norm() > 0.05);
        let c = power_cost(p, 2).unwrap();
        prop_assert!((c.value(&x, &y).unwrap() - c.value(&y, &x).unwrap()).abs() <= 1e-12 * (1.0 + c.value(&x, &y).unwrap().abs()));
        let a = c.hess_xx(&x, &y).unwrap();
        prop_assert!((&a - a.transpose()).amax() <= 1e-10);
        prop_assert!((&a - c.hess_yy(&x, &y).unwrap()).amax() <= 1e-10 * (1.0 + a.amax()));
    }
}
