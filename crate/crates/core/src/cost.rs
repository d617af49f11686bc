//! Cost functions `c(x, y)` with derivative access and the momentum inversion.
//!
//! The [`Cost`] trait is the extension point; [`PowerCost`] is the shipped
//! family `c(x, y) = |x - y|^p / p`. Free functions on top of the trait
//! provide the derivative bundle, the inversion `y(x, p)` solving
//! `c_x(x, y) = p`, the mixed-Hessian check and c*-segments.

use std::fmt;

use crate::{Error, Matrix, Result, Vector};

/// Minimum admissible `|x - y|` for singular costs.
pub const SINGULARITY_EPS: f64 = 1e-8;

const NEWTON_MAX_ITERS: usize = 50;
const MIXED_DET_MIN: f64 = 1e-12;

/// Third-order tensor `T[m][i][j]`, stored row-major with the first index slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, m: usize, i: usize, j: usize) -> f64 {
        self.data[(m * self.dim + i) * self.dim + j]
    }

    pub fn set(&mut self, m: usize, i: usize, j: usize, value: f64) {
        self.data[(m * self.dim + i) * self.dim + j] = value;
    }

    /// Slice `T[m][.][.]` as a matrix.
    pub fn slice(&self, m: usize) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.get(m, i, j))
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// A transport cost with derivative access.
///
/// `hess_xy(x, y)[(i, j)]` is `d^2 c / dx_i dy_j`. Implementors only need the
/// first and second derivatives; third derivatives and the inversion
/// initializer have generic defaults.
pub trait Cost: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector, y: &Vector) -> Result<f64>;
    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector>;
    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector>;
    fn hess_xx(&self, x: &Vector, y: &Vector) -> Result<Matrix>;
    fn hess_yy(&self, x: &Vector, y: &Vector) -> Result<Matrix>;
    fn hess_xy(&self, x: &Vector, y: &Vector) -> Result<Matrix>;

    /// `T[m][i][j] = d^3 c / dy_m dx_i dx_j`, by default from central
    /// differences of `hess_xx` in `y` with step `1e-4 (1 + |x|)`.
    fn third_yxx(&self, x: &Vector, y: &Vector) -> Result<Tensor3> {
        third_yxx_fd(self, x, y)
    }

    /// Starting point for the Newton solve of `c_x(x, y) = p`.
    fn inversion_guess(&self, x: &Vector, p: &Vector) -> Result<Vector> {
        Ok(x - p)
    }

    /// Exponent when this is a power cost; lets callers pick closed forms.
    fn power_exponent(&self) -> Option<f64> {
        None
    }

    fn label(&self) -> String;
}

/// Central-difference third derivative, independent of any analytic override.
pub fn third_yxx_fd<C: Cost + ?Sized>(cost: &C, x: &Vector, y: &Vector) -> Result<Tensor3> {
    let d = cost.dim();
    let h = 1e-4 * (1.0 + x.norm());
    let mut out = Tensor3::zeros(d);
    for m in 0..d {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[m] += h;
        ym[m] -= h;
        let diff = (cost.hess_xx(x, &yp)? - cost.hess_xx(x, &ym)?) / (2.0 * h);
        for i in 0..d {
            for j in 0..d {
                out.set(m, i, j, diff[(i, j)]);
            }
        }
    }
    Ok(out)
}

/// `c(x, y) = |x - y|^p / p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerCost {
    p: f64,
    dim: usize,
}

/// Builds the power cost; rejects `p = 0` (log cost is not provided) and `dim < 2`.
pub fn power_cost(p: f64, dim: usize) -> Result<PowerCost> {
    if !p.is_finite() || p == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "power cost exponent must be finite and nonzero, got {p}"
        )));
    }
    if dim < 2 {
        return Err(Error::InvalidParameter(format!(
            "ambient dimension must be at least 2, got {dim}"
        )));
    }
    Ok(PowerCost { p, dim })
}

impl PowerCost {
    pub fn p(&self) -> f64 {
        self.p
    }

    fn diff(&self, x: &Vector, y: &Vector) -> Result<(Vector, f64)> {
        check_dim(self.dim, x)?;
        check_dim(self.dim, y)?;
        let r = x - y;
        let s = r.norm();
        if s.is_nan() || s < SINGULARITY_EPS {
            return Err(Error::Singular { distance: s });
        }
        Ok((r, s))
    }

    /// `s^(p-2) I + (p-2) s^(p-4) r r^T`, the Hessian of `c` in `x`.
    fn hess_of_diff(&self, r: &Vector, s: f64) -> Matrix {
        let p = self.p;
        let d = self.dim;
        let a = s.powf(p - 2.0);
        let b = (p - 2.0) * s.powf(p - 4.0);
        Matrix::identity(d, d) * a + r * r.transpose() * b
    }

    /// Analytic `d^3 c / dy_m dx_i dx_j`, the negated x-gradient of `hess_xx`.
    pub fn third_yxx_analytic(&self, x: &Vector, y: &Vector) -> Result<Tensor3> {
        let (r, s) = self.diff(x, y)?;
        let p = self.p;
        let d = self.dim;
        let k1 = (p - 2.0) * s.powf(p - 4.0);
        let k2 = (p - 2.0) * (p - 4.0) * s.powf(p - 6.0);
        let mut out = Tensor3::zeros(d);
        for m in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    let dx =
                        k1 * (r[m] * delta(i, j) + delta(i, m) * r[j] + delta(j, m) * r[i]) + k2 * r[m] * r[i] * r[j];
                    out.set(m, i, j, -dx);
                }
            }
        }
        Ok(out)
    }
}

fn check_dim(expected: usize, v: &Vector) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: v.len() });
    }
    Ok(())
}

impl Cost for PowerCost {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        let (_, s) = self.diff(x, y)?;
        Ok(s.powf(self.p) / self.p)
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        let (r, s) = self.diff(x, y)?;
        Ok(r * s.powf(self.p - 2.0))
    }

    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        Ok(-self.grad_x(x, y)?)
    }

    fn hess_xx(&self, x: &Vector, y: &Vector) -> Result<Matrix> {
        let (r, s) = self.diff(x, y)?;
        Ok(self.hess_of_diff(&r, s))
    }

    fn hess_yy(&self, x: &Vector, y: &Vector) -> Result<Matrix> {
        self.hess_xx(x, y)
    }

    fn hess_xy(&self, x: &Vector, y: &Vector) -> Result<Matrix> {
        Ok(-self.hess_xx(x, y)?)
    }

    fn third_yxx(&self, x: &Vector, y: &Vector) -> Result<Tensor3> {
        if self.p == 2.0 || self.p == -2.0 {
            self.third_yxx_analytic(x, y)
        } else {
            third_yxx_fd(self, x, y)
        }
    }

    fn inversion_guess(&self, x: &Vector, p: &Vector) -> Result<Vector> {
        if self.p == 1.0 {
            return Err(Error::InvalidParameter(
                "momentum inversion is not unique for p = 1".into(),
            ));
        }
        let norm = p.norm();
        if norm == 0.0 {
            return Err(Error::ZeroMomentum);
        }
        // c_x = |r|^(p-2) r = p  =>  r = p |p|^((2-p)/(p-1))
        Ok(x - p * norm.powf((2.0 - self.p) / (self.p - 1.0)))
    }

    fn power_exponent(&self) -> Option<f64> {
        Some(self.p)
    }

    fn label(&self) -> String {
        format!("power(p={}, d={})", self.p, self.dim)
    }
}

/// All derivatives of `c` at one point.
#[derive(Clone, Debug)]
pub struct DerivativeBundle {
    pub c: f64,
    pub c_x: Vector,
    pub c_y: Vector,
    pub c_xx: Matrix,
    /// `(c_xy)[(i, j)] = d^2 c / dx_i dy_j`.
    pub c_xy: Matrix,
    /// `c_yxx.get(m, i, j) = d^3 c / dy_m dx_i dx_j`.
    pub c_yxx: Tensor3,
}

pub fn derivatives<C: Cost + ?Sized>(model: &C, x: &Vector, y: &Vector) -> Result<DerivativeBundle> {
    Ok(DerivativeBundle {
        c: model.value(x, y)?,
        c_x: model.grad_x(x, y)?,
        c_y: model.grad_y(x, y)?,
        c_xx: model.hess_xx(x, y)?,
        c_xy: model.hess_xy(x, y)?,
        c_yxx: model.third_yxx(x, y)?,
    })
}

/// Solves `c_x(x, y) = p` for `y`.
///
/// Starts from the model's closed-form guess and polishes with damped Newton
/// until `|c_x(x, y) - p| <= 1e-10 (1 + |p|)`.
pub fn solve_y_from_p<C: Cost + ?Sized>(model: &C, x: &Vector, p: &Vector) -> Result<Vector> {
    check_dim(model.dim(), x)?;
    check_dim(model.dim(), p)?;
    if p.norm() == 0.0 && model.power_exponent().is_some() {
        return Err(Error::ZeroMomentum);
    }
    let tol = 1e-10 * (1.0 + p.norm());
    let mut y = model.inversion_guess(x, p)?;
    let mut residual = model.grad_x(x, &y)? - p;
    let mut res_norm = residual.norm();

    for _ in 0..NEWTON_MAX_ITERS {
        if res_norm <= tol {
            return Ok(y);
        }
        let jac = model.hess_xy(x, &y)?;
        let step = jac.lu().solve(&residual).ok_or(Error::SingularMatrix { det: 0.0 })?;
        let mut scale = 1.0;
        loop {
            let candidate = &y - &step * scale;
            let accepted = match model.grad_x(x, &candidate) {
                Ok(g) => {
                    let r = g - p;
                    let n = r.norm();
                    if n < res_norm || scale < 1e-6 {
                        Some((candidate, r, n))
                    } else {
                        None
                    }
                }
                Err(_) if scale >= 1e-6 => None,
                Err(e) => return Err(e),
            };
            if let Some((c, r, n)) = accepted {
                y = c;
                residual = r;
                res_norm = n;
                break;
            }
            scale *= 0.5;
        }
    }
    if res_norm <= tol {
        Ok(y)
    } else {
        Err(Error::NoConvergence {
            what: "momentum inversion",
            iterations: NEWTON_MAX_ITERS,
            residual: res_norm,
        })
    }
}

/// The mixed Hessian `c_xy`, its determinant, and `mu = [c_{y,x}]^{-1}`.
#[derive(Clone, Debug)]
pub struct MixedHessian {
    pub c_xy: Matrix,
    pub det: f64,
    /// Inverse of `c_yx = c_xy^T`; rows indexed by `y`, columns by `x`.
    pub mu: Matrix,
}

pub fn mixed_hessian<C: Cost + ?Sized>(model: &C, x: &Vector, y: &Vector) -> Result<MixedHessian> {
    let c_xy = model.hess_xy(x, y)?;
    let det = c_xy.determinant();
    if !det.is_finite() || det.abs() < MIXED_DET_MIN {
        return Err(Error::SingularMatrix { det });
    }
    let mu = c_xy.transpose().try_inverse().ok_or(Error::SingularMatrix { det })?;
    Ok(MixedHessian { c_xy, det, mu })
}

pub fn mixed_hessian_det<C: Cost + ?Sized>(model: &C, x: &Vector, y: &Vector) -> Result<f64> {
    mixed_hessian(model, x, y).map(|m| m.det)
}

/// Point `y_t` of the c*-segment through `x0`: `c_x(x0, y_t) = (1 - t) p0 + t p1`.
pub fn c_star_segment<C: Cost + ?Sized>(model: &C, x0: &Vector, p0: &Vector, p1: &Vector, t: f64) -> Result<Vector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("segment parameter {t} outside [0, 1]")));
    }
    if model.power_exponent().is_some() && segment_distance_to_origin(p0, p1) < 1e-12 * (1.0 + p0.norm() + p1.norm()) {
        return Err(Error::SegmentThroughZero);
    }
    let pt = p0 * (1.0 - t) + p1 * t;
    solve_y_from_p(model, x0, &pt)
}

/// Distance from the origin to the segment `[p0, p1]`.
pub fn segment_distance_to_origin(p0: &Vector, p1: &Vector) -> f64 {
    let dir = p1 - p0;
    let len2 = dir.norm_squared();
    if len2 == 0.0 {
        return p0.norm();
    }
    let t = (-p0.dot(&dir) / len2).clamp(0.0, 1.0);
    (p0 + dir * t).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn rejects_zero_exponent_and_small_dim() {
        assert!(matches!(power_cost(0.0, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(power_cost(2.0, 1), Err(Error::InvalidParameter(_))));
        assert!(power_cost(-2.0, 3).is_ok());
    }

    #[test]
    fn values_at_unit_and_double_distance() {
        let o = v(&[0.0, 0.0]);
        assert_eq!(power_cost(2.0, 2).unwrap().value(&o, &v(&[1.0, 0.0])).unwrap(), 0.5);
        assert_eq!(power_cost(-2.0, 2).unwrap().value(&o, &v(&[1.0, 0.0])).unwrap(), -0.5);
        assert_eq!(power_cost(-1.0, 2).unwrap().value(&o, &v(&[2.0, 0.0])).unwrap(), -0.5);
    }

    #[test]
    fn quadratic_bundle() {
        let cost = power_cost(2.0, 2).unwrap();
        let b = derivatives(&cost, &v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(b.c_x, v(&[-1.0, 0.0]));
        assert_eq!(b.c_xx, Matrix::identity(2, 2));
        assert_eq!(b.c_xy, -Matrix::identity(2, 2));
        assert_eq!(b.c_yxx.max_abs(), 0.0);
    }

    #[test]
    fn singular_point_rejected() {
        let cost = power_cost(-2.0, 2).unwrap();
        let x = v(&[0.3, 0.3]);
        assert!(matches!(cost.value(&x, &x), Err(Error::Singular { .. })));
        assert!(matches!(derivatives(&cost, &x, &x), Err(Error::Singular { .. })));
    }

    #[test]
    fn quadratic_inversion_is_translation() {
        let cost = power_cost(2.0, 2).unwrap();
        let y = solve_y_from_p(&cost, &v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert_relative_eq!(y, v(&[-1.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn inverse_square_inversion_residual() {
        let cost = power_cost(-2.0, 2).unwrap();
        let x = v(&[0.0, 0.0]);
        let p = v(&[1.0, 0.0]);
        let y = solve_y_from_p(&cost, &x, &p).unwrap();
        assert!((cost.grad_x(&x, &y).unwrap() - &p).norm() <= 1e-10 * 2.0);
    }

    #[test]
    fn inversion_errors() {
        let cost = power_cost(-2.0, 2).unwrap();
        let x = v(&[0.0, 0.0]);
        assert!(matches!(
            solve_y_from_p(&cost, &x, &v(&[0.0, 0.0])),
            Err(Error::ZeroMomentum)
        ));
        let linear = power_cost(1.0, 2).unwrap();
        assert!(solve_y_from_p(&linear, &x, &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn quadratic_mixed_hessian() {
        let cost = power_cost(2.0, 2).unwrap();
        let m = mixed_hessian(&cost, &v(&[0.5, 0.1]), &v(&[-0.2, 1.0])).unwrap();
        assert_eq!(m.det, 1.0);
        assert!((&m.mu * m.c_xy.transpose() - Matrix::identity(2, 2)).norm() < 1e-12);
        let cost3 = power_cost(2.0, 3).unwrap();
        let det3 = mixed_hessian_det(&cost3, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(det3, -1.0);
    }

    #[test]
    fn linear_cost_violates_a2() {
        // p = 1: c_xx has a zero eigenvalue along x - y
        let cost = power_cost(1.0, 2).unwrap();
        let r = mixed_hessian(&cost, &v(&[0.0, 0.0]), &v(&[1.0, 0.0]));
        assert!(matches!(r, Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn segment_endpoints_and_quadratic_line() {
        let cost = power_cost(2.0, 2).unwrap();
        let x0 = v(&[0.2, -0.4]);
        let p0 = v(&[1.0, 0.5]);
        let p1 = v(&[-0.5, 2.0]);
        for t in [0.0, 0.25, 0.5, 1.0] {
            let y = c_star_segment(&cost, &x0, &p0, &p1, t).unwrap();
            let pt = &p0 * (1.0 - t) + &p1 * t;
            assert_relative_eq!(y, &x0 - pt, epsilon = 1e-12);
        }
        let inv = power_cost(-2.0, 2).unwrap();
        let y0 = c_star_segment(&inv, &x0, &p0, &p1, 0.0).unwrap();
        assert_relative_eq!(y0, solve_y_from_p(&inv, &x0, &p0).unwrap(), epsilon = 1e-14);
        let y1 = c_star_segment(&inv, &x0, &p0, &p1, 1.0).unwrap();
        assert_relative_eq!(y1, solve_y_from_p(&inv, &x0, &p1).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn segment_through_zero_rejected() {
        let cost = power_cost(-2.0, 2).unwrap();
        let r = c_star_segment(&cost, &v(&[0.0, 0.0]), &v(&[1.0, 0.0]), &v(&[-1.0, 0.0]), 0.2);
        assert!(matches!(r, Err(Error::SegmentThroughZero)));
    }

    #[test]
    fn analytic_third_derivative_matches_fd() {
        for p in [2.0, -2.0, -1.0, 0.5, 3.0] {
            let cost = power_cost(p, 3).unwrap();
            let x = v(&[0.3, -0.2, 0.5]);
            let y = v(&[-0.4, 0.6, 0.1]);
            let analytic = cost.third_yxx_analytic(&x, &y).unwrap();
            let fd = third_yxx_fd(&cost, &x, &y).unwrap();
            assert!(
                analytic.max_abs_diff(&fd) <= 1e-6 * (1.0 + analytic.max_abs()),
                "p = {p}"
            );
        }
    }
}
