//! Oriented implicit hypersurfaces `{psi = 0}`.
//!
//! Conventions: the bounded region is `{psi < 0}` and `grad psi / |grad psi|`
//! is its outward normal. Constructors flip the sign of the raw field when an
//! interior probe shows it points the wrong way, so every downstream quantity
//! (second fundamental form, Weingarten spectrum, Gauss inverse) can assume
//! the convention.
//!
//! The second fundamental form is evaluated by the implicit formula
//! `II(v) = v^T D^2 psi v / |grad psi|` for unit tangent `v`, which is positive
//! on convex surfaces with outward orientation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::linalg::{symmetric_eigen, tangent_basis};
use crate::{Error, Matrix, Result, Vector};

/// Points with `|psi| <= ON_SURFACE_TOL` are accepted as surface points.
pub const ON_SURFACE_TOL: f64 = 1e-6;
/// Gradients shorter than this make a point singular.
pub const MIN_GRADIENT: f64 = 1e-10;
const TANGENT_TOL: f64 = 1e-8;

/// A smooth scalar field with gradient and Hessian access.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;
}

/// Axis-aligned box used by samplers and ray searches.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    pub lo: Vector,
    pub hi: Vector,
}

impl BoundingBox {
    pub fn new(lo: Vector, hi: Vector) -> Self {
        Self { lo, hi }
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self {
            lo: Vector::from_element(dim, -half_width),
            hi: Vector::from_element(dim, half_width),
        }
    }

    pub fn around(center: &Vector, half_width: f64) -> Self {
        Self {
            lo: center.add_scalar(-half_width),
            hi: center.add_scalar(half_width),
        }
    }

    pub fn diagonal(&self) -> f64 {
        (&self.hi - &self.lo).norm()
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn center(&self) -> Vector {
        (&self.lo + &self.hi) * 0.5
    }
}

/// `|x - c|^2 - r^2`.
#[derive(Clone, Debug)]
pub struct SphereField {
    pub center: Vector,
    pub radius: f64,
}

impl ScalarField for SphereField {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        (x - &self.center).norm_squared() - self.radius * self.radius
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (x - &self.center) * 2.0
    }
    fn hessian(&self, _x: &Vector) -> Matrix {
        let d = self.dim();
        Matrix::identity(d, d) * 2.0
    }
}

/// `sum_i ((x_i - c_i) / a_i)^2 - 1`.
#[derive(Clone, Debug)]
pub struct EllipsoidField {
    pub center: Vector,
    pub semi_axes: Vector,
}

impl ScalarField for EllipsoidField {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        (x - &self.center)
            .iter()
            .zip(self.semi_axes.iter())
            .map(|(v, a)| (v / a).powi(2))
            .sum::<f64>()
            - 1.0
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let r = x - &self.center;
        Vector::from_fn(self.dim(), |i, _| 2.0 * r[i] / self.semi_axes[i].powi(2))
    }
    fn hessian(&self, _x: &Vector) -> Matrix {
        Matrix::from_diagonal(&self.semi_axes.map(|a| 2.0 / (a * a)))
    }
}

/// Field shifted by `offset`: `psi(x - offset)`.
#[derive(Clone, Debug)]
pub struct Translated {
    pub inner: Arc<dyn ScalarField>,
    pub offset: Vector,
}

impl ScalarField for Translated {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(&(x - &self.offset))
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.inner.gradient(&(x - &self.offset))
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        self.inner.hessian(&(x - &self.offset))
    }
}

/// An oriented implicit hypersurface with a known interior point.
#[derive(Clone, Debug)]
pub struct ImplicitSurface {
    field: Arc<dyn ScalarField>,
    sign: f64,
    interior: Vector,
    bounds: BoundingBox,
}

impl ImplicitSurface {
    /// Wraps `field`, negating it if `field(interior) > 0`.
    pub fn new(field: Arc<dyn ScalarField>, interior: Vector, bounds: BoundingBox) -> Result<Self> {
        if interior.len() != field.dim() {
            return Err(Error::DimensionMismatch {
                expected: field.dim(),
                got: interior.len(),
            });
        }
        let probe = field.value(&interior);
        if !probe.is_finite() || probe == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "interior probe must be strictly inside, psi = {probe}"
            )));
        }
        let sign = if probe < 0.0 { 1.0 } else { -1.0 };
        Ok(Self {
            field,
            sign,
            interior,
            bounds,
        })
    }

    /// Uses an explicit orientation sign; `interior` must satisfy `sign * psi < 0`.
    pub fn with_sign(field: Arc<dyn ScalarField>, sign: f64, interior: Vector, bounds: BoundingBox) -> Self {
        Self {
            field,
            sign: sign.signum(),
            interior,
            bounds,
        }
    }

    pub fn sphere(center: Vector, radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let bounds = BoundingBox::around(&center, 2.0 * radius);
        Self::new(
            Arc::new(SphereField {
                center: center.clone(),
                radius,
            }),
            center,
            bounds,
        )
    }

    pub fn ellipsoid(center: Vector, semi_axes: Vector) -> Result<Self> {
        if semi_axes.iter().any(|a| *a <= 0.0) || semi_axes.len() != center.len() {
            return Err(Error::InvalidParameter(
                "semi-axes must be positive, one per axis".into(),
            ));
        }
        let bounds = BoundingBox::around(&center, 2.0 * semi_axes.max());
        Self::new(
            Arc::new(EllipsoidField {
                center: center.clone(),
                semi_axes,
            }),
            center,
            bounds,
        )
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// `+1` when the raw field is used as is, `-1` when it was negated.
    pub fn orientation_sign(&self) -> f64 {
        self.sign
    }

    pub fn interior_point(&self) -> &Vector {
        &self.interior
    }

    pub fn bounds(&self) -> &BoundingBox {
        &self.bounds
    }

    pub fn field(&self) -> &Arc<dyn ScalarField> {
        &self.field
    }

    pub fn psi(&self, x: &Vector) -> f64 {
        self.sign * self.field.value(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.field.gradient(x) * self.sign
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        self.field.hessian(x) * self.sign
    }

    /// The same surface moved by `offset`.
    pub fn translated(&self, offset: &Vector) -> Self {
        Self {
            field: Arc::new(Translated {
                inner: self.field.clone(),
                offset: offset.clone(),
            }),
            sign: self.sign,
            interior: &self.interior + offset,
            bounds: BoundingBox::new(&self.bounds.lo + offset, &self.bounds.hi + offset),
        }
    }
}

/// Newton projection onto `{psi = 0}` along the gradient.
///
/// Stops when the geometric residual `|psi| / |grad psi|` reaches round-off.
pub fn project_to_surface(surface: &ImplicitSurface, x: &Vector) -> Result<Vector> {
    project_with_budget(surface, x, 60).map(|(p, _)| p)
}

/// Projection that also reports the number of Newton steps taken.
pub(crate) fn project_with_budget(surface: &ImplicitSurface, x: &Vector, max_iters: usize) -> Result<(Vector, usize)> {
    let mut x = x.clone();
    let scale = 1.0 + x.norm();
    for iter in 0..max_iters {
        let value = surface.psi(&x);
        let grad = surface.gradient(&x);
        let g2 = grad.norm_squared();
        if !value.is_finite() || !g2.is_finite() {
            return Err(Error::NoConvergence {
                what: "surface projection",
                iterations: iter,
                residual: f64::INFINITY,
            });
        }
        if g2.sqrt() < MIN_GRADIENT {
            return Err(Error::DegenerateGradient { norm: g2.sqrt() });
        }
        let step = &grad * (value / g2);
        x -= &step;
        if step.norm() <= 4.0 * f64::EPSILON * scale {
            return Ok((x, iter + 1));
        }
    }
    let residual = surface.psi(&x).abs() / surface.gradient(&x).norm();
    if residual <= 1e-12 * scale {
        Ok((x, max_iters))
    } else {
        Err(Error::NoConvergence {
            what: "surface projection",
            iterations: max_iters,
            residual,
        })
    }
}

fn on_surface_point(surface: &ImplicitSurface, x: &Vector) -> Result<Vector> {
    let residual = surface.psi(x).abs();
    if !(residual <= ON_SURFACE_TOL) {
        return Err(Error::OffSurface { residual });
    }
    // one Newton correction for traced points carrying discretisation error
    let grad = surface.gradient(x);
    let norm = grad.norm();
    if !(norm > MIN_GRADIENT) {
        return Err(Error::DegenerateGradient { norm });
    }
    Ok(x - grad * (surface.psi(x) / (norm * norm)))
}

/// Unit outward normal at a surface point.
pub fn outward_normal(surface: &ImplicitSurface, x: &Vector) -> Result<Vector> {
    let x = on_surface_point(surface, x)?;
    let grad = surface.gradient(&x);
    let norm = grad.norm();
    if !(norm > MIN_GRADIENT) {
        return Err(Error::DegenerateGradient { norm });
    }
    Ok(grad / norm)
}

/// Surface point with its unit normal and an orthonormal tangent basis.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    pub point: Vector,
    pub normal: Vector,
    /// `d x (d-1)`, columns orthonormal and orthogonal to `normal`.
    pub tangents: Matrix,
}

impl TangentFrame {
    pub fn at(surface: &ImplicitSurface, x: &Vector) -> Result<Self> {
        let point = on_surface_point(surface, x)?;
        let normal = outward_normal(surface, &point)?;
        let tangents = tangent_basis(&normal);
        Ok(Self {
            point,
            normal,
            tangents,
        })
    }

    pub fn tangent(&self, k: usize) -> Vector {
        self.tangents.column(k).into_owned()
    }
}

/// `II(v) = v^T D^2 psi v / |grad psi|` for a unit tangent `v`.
pub fn second_fundamental_form(surface: &ImplicitSurface, frame: &TangentFrame, v: &Vector) -> Result<f64> {
    let dot = v.dot(&frame.normal);
    if dot.abs() >= TANGENT_TOL {
        return Err(Error::NonTangent { dot });
    }
    if (v.norm() - 1.0).abs() > TANGENT_TOL {
        return Err(Error::InvalidParameter(format!(
            "tangent direction must be unit, |v| = {}",
            v.norm()
        )));
    }
    let grad_norm = surface.gradient(&frame.point).norm();
    if !(grad_norm > MIN_GRADIENT) {
        return Err(Error::DegenerateGradient { norm: grad_norm });
    }
    let h = surface.hessian(&frame.point);
    Ok(v.dot(&(h * v)) / grad_norm)
}

/// The shape operator in the frame's tangent basis.
pub fn shape_matrix(surface: &ImplicitSurface, frame: &TangentFrame) -> Result<Matrix> {
    let grad_norm = surface.gradient(&frame.point).norm();
    if !(grad_norm > MIN_GRADIENT) {
        return Err(Error::DegenerateGradient { norm: grad_norm });
    }
    let h = surface.hessian(&frame.point);
    Ok(frame.tangents.transpose() * h * &frame.tangents / grad_norm)
}

/// Principal curvatures and directions (ambient unit vectors), ascending.
pub fn weingarten_eigen(surface: &ImplicitSurface, x: &Vector) -> Result<(Vec<f64>, Vec<Vector>)> {
    let frame = TangentFrame::at(surface, x)?;
    let shape = shape_matrix(surface, &frame)?;
    let (values, vectors) = symmetric_eigen(&shape);
    let dirs = (0..values.len())
        .map(|k| (&frame.tangents * vectors.column(k)).normalize())
        .collect();
    Ok((values, dirs))
}

/// Principal curvatures at `x`, ascending.
pub fn weingarten_spectrum(surface: &ImplicitSurface, x: &Vector) -> Result<Vec<f64>> {
    weingarten_eigen(surface, x).map(|(values, _)| values)
}

/// Point where `{psi <= 0}` meets the ray `interior + t w`, `t > 0`.
pub fn ray_hit(surface: &ImplicitSurface, w: &Vector) -> Result<Vector> {
    let origin = surface.interior_point();
    let mut hi = 0.25 * surface.bounds().diagonal().max(1e-6);
    let mut tries = 0;
    while surface.psi(&(origin + w * hi)) <= 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::UnboundedSublevel);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let value = surface.psi(&(origin + w * mid));
        if value.is_nan() || value <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    project_to_surface(surface, &(origin + w * lo))
}

/// Inverse of the Gauss map: the surface point whose outward normal is `w`.
///
/// Maximises `w . x` over the convex region: start where the ray from the
/// interior point along `w` exits, then take Riemannian Newton steps
/// `s = S^{-1} P_T w / (w . n)` (S the shape operator) followed by a
/// projection back to the surface. Failure to converge is a witness of
/// non-convexity or vanishing curvature.
pub fn gauss_inverse(surface: &ImplicitSurface, w: &Vector) -> Result<Vector> {
    if w.len() != surface.dim() {
        return Err(Error::DimensionMismatch {
            expected: surface.dim(),
            got: w.len(),
        });
    }
    let w = w.normalize();
    let mut x = ray_hit(surface, &w)?;
    let max_step = 0.25 * surface.bounds().diagonal();
    let mut last_gap = f64::INFINITY;

    for iter in 0..200 {
        let grad = surface.gradient(&x);
        let grad_norm = grad.norm();
        if !(grad_norm > MIN_GRADIENT) {
            return Err(Error::DegenerateGradient { norm: grad_norm });
        }
        let n = &grad / grad_norm;
        let gap = (&n - &w).norm();
        if gap <= 1e-14 || (iter > 0 && gap <= 1e-11 && gap >= 0.5 * last_gap) {
            break;
        }
        last_gap = gap;
        let cos = w.dot(&n);
        if cos <= 1e-12 {
            return Err(Error::NoConvergence {
                what: "gauss inverse (normal turned away)",
                iterations: iter,
                residual: gap,
            });
        }
        let frame = TangentFrame {
            point: x.clone(),
            normal: n.clone(),
            tangents: tangent_basis(&n),
        };
        let shape = shape_matrix(surface, &frame)?;
        let g_t = frame.tangents.transpose() * &w;
        let (vals, vecs) = symmetric_eigen(&shape);
        // Newton in the eigenbasis; nonpositive curvature falls back to ascent
        let mut coeffs = vecs.transpose() * &g_t;
        for (k, lambda) in vals.iter().enumerate() {
            coeffs[k] /= if *lambda > 1e-12 { lambda * cos } else { 1.0 };
        }
        let mut step = &frame.tangents * (&vecs * coeffs);
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        let current = w.dot(&x);
        let mut accepted = None;
        for _ in 0..40 {
            if let Ok(candidate) = project_to_surface(surface, &(&x + &step)) {
                if w.dot(&candidate) >= current - 1e-15 * (1.0 + current.abs()) {
                    accepted = Some(candidate);
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some(c) => x = c,
            None => break,
        }
    }

    let n = outward_normal(surface, &x)?;
    let gap = (&n - &w).norm();
    if gap > 1e-9 {
        return Err(Error::NoConvergence {
            what: "gauss inverse",
            iterations: 200,
            residual: gap,
        });
    }
    Ok(x)
}

/// Ordered 2D point list.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline2D {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline2D {
    pub fn new(points: Vec<[f64; 2]>, closed: bool) -> Self {
        Self { points, closed }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn regular_polygon(n: usize, radius: f64) -> Self {
        let points = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect();
        Self::new(points, true)
    }

    pub fn map<F: Fn([f64; 2]) -> [f64; 2]>(&self, f: F) -> Self {
        Self::new(self.points.iter().map(|p| f(*p)).collect(), self.closed)
    }

    pub fn vertex(&self, i: usize) -> Vector {
        Vector::from_column_slice(&self.points[i])
    }
}

/// Result of the discrete convexity test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Convexity {
    Convex,
    NonConvex { witness: usize },
}

impl Convexity {
    pub fn is_convex(&self) -> bool {
        matches!(self, Convexity::Convex)
    }
}

/// Convexity certificate for a closed polyline.
///
/// Convex iff every turn `e_i x e_{i+1}` has the sign of the enclosed area
/// (turns within `1e-9 |e_i| |e_{i+1}|` count as straight) and the curve
/// winds exactly once. The witness is the first offending vertex.
pub fn polyline_convexity(curve: &Polyline2D) -> Result<Convexity> {
    if !curve.closed {
        return Err(Error::OpenCurve);
    }
    let n = curve.len();
    if n < 4 {
        return Err(Error::TooFewPoints(n));
    }
    let pts = &curve.points;
    let edge = |i: usize| {
        let a = pts[i % n];
        let b = pts[(i + 1) % n];
        [b[0] - a[0], b[1] - a[1]]
    };
    let area2: f64 = (0..n)
        .map(|i| {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    let orientation = if area2 >= 0.0 { 1.0 } else { -1.0 };

    let mut turning = 0.0;
    for i in 0..n {
        let e0 = edge(i);
        let e1 = edge(i + 1);
        let cross = e0[0] * e1[1] - e0[1] * e1[0];
        let dot = e0[0] * e1[0] + e0[1] * e1[1];
        let scale = e0[0].hypot(e0[1]) * e1[0].hypot(e1[1]);
        if cross * orientation < -1e-9 * scale {
            return Ok(Convexity::NonConvex { witness: (i + 1) % n });
        }
        turning += cross.atan2(dot);
        if turning.abs() > 2.0 * PI + 1e-6 {
            return Ok(Convexity::NonConvex { witness: (i + 1) % n });
        }
    }
    if (turning.abs() - 2.0 * PI).abs() > 1e-6 {
        return Ok(Convexity::NonConvex { witness: 0 });
    }
    Ok(Convexity::Convex)
}
