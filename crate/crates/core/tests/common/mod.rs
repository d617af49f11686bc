//! Seeded case generators shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rollball::cost::power_cost;
use rollball::geometry::gauss_inverse;
use rollball::linalg::{random_in_box, random_orthonormal_pair, random_unit, tangent_basis};
use rollball::mtw::{default_step, mtw_contraction, segment_second_derivative, MtwSample};
use rollball::sublevel::{build_sublevel_psi, closed_form_tangential_hessian_invquad, SublevelSpec, EXAMPLE_SETS};
use rollball::Vector;

/// One momentum-segment comparison: `L^2 A(xi, xi, eta, eta)` at `p_t`
/// against the second derivative of `xi^T A xi` along `p0 -> p1`.
#[derive(Debug)]
pub struct SegmentCase {
    pub contraction: f64,
    pub segment: f64,
}

impl SegmentCase {
    pub fn relative_gap(&self) -> f64 {
        (self.contraction - self.segment).abs() / self.contraction.abs().max(self.segment.abs())
    }
}

/// `n` cases with `p1 - p0 = L eta`, `L` in `[0.2, 1]`, `eta` orthogonal to
/// `xi`, evaluated at `t = 0.5`.
pub fn segment_cases(p: f64, n: usize, seed: u64) -> Vec<SegmentCase> {
    let model = power_cost(p, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = random_in_box(&mut rng, 2, 2.0);
        let mid = random_unit(&mut rng, 2) * rng.random_range(0.5..3.0);
        let (xi, eta) = random_orthonormal_pair(&mut rng, 2);
        let len: f64 = rng.random_range(0.2..1.0);
        let p0 = &mid - &eta * (0.5 * len);
        let p1 = &mid + &eta * (0.5 * len);
        let sample = MtwSample::new(x.clone(), mid.clone(), xi.clone(), eta).unwrap();
        let contraction = mtw_contraction(&model, &sample, default_step(&mid)).unwrap() * len * len;
        let segment = segment_second_derivative(&model, &x, &p0, &p1, &xi, 0.5).unwrap();
        out.push(SegmentCase { contraction, segment });
    }
    out
}

#[derive(Debug)]
pub struct ClosedFormCase {
    pub set: usize,
    pub a: f64,
    pub closed: f64,
    /// Central difference of the analytic gradient along `tau`.
    pub difference: f64,
    /// Closed form for the swapped description `(y2, y1, -a)` of the same set.
    pub swapped: f64,
}

/// `n` on-set points spread over the three example sets, found by Gauss
/// inversion of seeded normals on the oriented sub-level boundary.
pub fn closed_form_cases(n: usize, seed: u64) -> Vec<ClosedFormCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let built: Vec<_> = (0..EXAMPLE_SETS.len())
        .map(|i| build_sublevel_psi(&SublevelSpec::example_set(i).unwrap()).unwrap())
        .collect();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let set = k % EXAMPLE_SETS.len();
        let built = &built[set];
        let spec = &built.spec;
        let x = gauss_inverse(&built.surface, &random_unit(&mut rng, 2)).unwrap();
        let raw = spec.raw_field();
        let grad = raw.gradient(&x);
        let tau = tangent_basis(&grad.normalize()).column(0).into_owned();
        let h = 1e-5;
        let difference = tau.dot(&(raw.gradient(&(&x + &tau * h)) - raw.gradient(&(&x - &tau * h)))) / (2.0 * h);
        let closed = closed_form_tangential_hessian_invquad(&spec.y1, &spec.y2, spec.a, &x, &tau).unwrap();
        let swapped = closed_form_tangential_hessian_invquad(&spec.y2, &spec.y1, -spec.a, &x, &tau).unwrap();
        out.push(ClosedFormCase {
            set,
            a: spec.a,
            closed,
            difference,
            swapped,
        });
    }
    out
}

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}
