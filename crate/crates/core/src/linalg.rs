//! Small dense helpers: cyclic Jacobi eigensolver, tangent bases, seeded
//! random directions.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Matrix, Vector};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching unit eigenvectors
/// as the columns of the second matrix. Only the upper triangle is read.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    let mut v = Matrix::identity(n, n);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let scale: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Orthonormal basis of the complement of the unit vector `n`, as columns.
///
/// Built by Gram-Schmidt on the standard basis, skipping the axis most
/// aligned with `n`. The result is a deterministic function of `n`.
pub fn tangent_basis(n: &Vector) -> Matrix {
    let d = n.len();
    let skip = (0..d).max_by(|&i, &j| n[i].abs().total_cmp(&n[j].abs())).unwrap_or(0);
    let mut basis: Vec<Vector> = Vec::with_capacity(d - 1);
    for axis in (0..d).filter(|&i| i != skip) {
        let mut e = Vector::zeros(d);
        e[axis] = 1.0;
        // two passes keep orthogonality at round-off level
        for _ in 0..2 {
            e -= n * n.dot(&e);
            for b in &basis {
                e -= b * b.dot(&e);
            }
        }
        basis.push(e.normalize());
    }
    Matrix::from_columns(&basis)
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vector {
    loop {
        let g = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 1e-8 {
            return g / norm;
        }
    }
}

/// Orthonormal pair from Gram-Schmidt on two Gaussian vectors.
pub fn random_orthonormal_pair<R: Rng + ?Sized>(rng: &mut R, d: usize) -> (Vector, Vector) {
    let xi = random_unit(rng, d);
    loop {
        let g = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut eta = &g - &xi * xi.dot(&g);
        eta -= &xi * xi.dot(&eta);
        let norm = eta.norm();
        if norm > 1e-6 {
            eta /= norm;
            return (xi, eta);
        }
    }
}

/// Uniform sample from the box `[-half_width, half_width]^d`.
pub fn random_in_box<R: Rng + ?Sized>(rng: &mut R, d: usize, half_width: f64) -> Vector {
    Vector::from_fn(d, |_, _| rng.random_range(-half_width..=half_width))
}

/// Random unit vector in the tangent space spanned by the columns of `basis`.
pub fn random_tangent<R: Rng + ?Sized>(rng: &mut R, basis: &Matrix) -> Vector {
    let coeffs = random_unit(rng, basis.ncols());
    let v = basis * coeffs;
    let norm = v.norm();
    v / norm
}
