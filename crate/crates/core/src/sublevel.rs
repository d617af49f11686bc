//! Boundaries of two-focus cost sub-level sets.
//!
//! For foci `y1, y2` and offset `a` the raw field is
//! `psi(x) = c(x, y1) - c(x, y2) - a`; for the inverse-square power cost
//! (`p = -2`) it is `|x - y2|^-2 - |x - y1|^-2 - a`, the normalisation used by
//! the closed-form tangential Hessian below. An orientation pass decides which
//! side of the level set is bounded and flips the field so the bounded side
//! is `{psi < 0}`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::{mixed_hessian, Cost};
use crate::geometry::{
    outward_normal, polyline_convexity, project_with_budget, BoundingBox, Convexity, ImplicitSurface, Polyline2D,
    ScalarField, MIN_GRADIENT, ON_SURFACE_TOL,
};
use crate::linalg::{random_unit, symmetric_eigen, tangent_basis};
use crate::{Error, Matrix, Result, Vector, SINGULAR_EXCLUSION};

/// Parameters of the three inverse-square examples: `(y1, y2, a)`.
pub const EXAMPLE_SETS: [([f64; 2], [f64; 2], f64); 3] = [
    ([-1e-3, 0.0], [-1.0, -1e-2], -2.0),
    ([-1e-1, -1e-1], [1.0, 1e-2], 1.0),
    ([-1e-4, 0.0], [1.1, -1e-1], -1.0),
];

/// Default tracing step.
pub const DEFAULT_TRACE_STEP: f64 = 0.01;

/// Foci, offset and cost defining `N(y1, y2, a)`.
#[derive(Clone, Debug)]
pub struct SublevelSpec {
    pub model: Arc<dyn Cost>,
    pub y1: Vector,
    pub y2: Vector,
    pub a: f64,
    /// Search box for interior probes; `[-2, 2]^d` by default.
    pub bounds: BoundingBox,
}

impl SublevelSpec {
    pub fn new(model: Arc<dyn Cost>, y1: Vector, y2: Vector, a: f64) -> Result<Self> {
        let d = model.dim();
        for y in [&y1, &y2] {
            if y.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: y.len(),
                });
            }
        }
        if (&y1 - &y2).norm() == 0.0 {
            return Err(Error::InvalidParameter("foci must be distinct".into()));
        }
        if !a.is_finite() {
            return Err(Error::InvalidParameter("offset must be finite".into()));
        }
        Ok(Self {
            model,
            y1,
            y2,
            a,
            bounds: BoundingBox::cube(d, 2.0),
        })
    }

    pub fn with_bounds(mut self, bounds: BoundingBox) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_offset(&self, a: f64) -> Self {
        Self { a, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// One of the inverse-square example sets, `index` in `0..3`.
    pub fn example_set(index: usize) -> Result<Self> {
        let (y1, y2, a) = *EXAMPLE_SETS
            .get(index)
            .ok_or_else(|| Error::InvalidParameter(format!("no example set {index}")))?;
        Self::new(
            Arc::new(crate::cost::power_cost(-2.0, 2)?),
            Vector::from_column_slice(&y1),
            Vector::from_column_slice(&y2),
            a,
        )
    }

    pub fn uses_inverse_square_form(&self) -> bool {
        self.model.power_exponent() == Some(-2.0)
    }

    /// The raw (unoriented) field.
    pub fn raw_field(&self) -> Arc<dyn ScalarField> {
        if self.uses_inverse_square_form() {
            Arc::new(InverseSquareDifference {
                y1: self.y1.clone(),
                y2: self.y2.clone(),
                a: self.a,
            })
        } else {
            Arc::new(CostDifference {
                model: self.model.clone(),
                y1: self.y1.clone(),
                y2: self.y2.clone(),
                a: self.a,
            })
        }
    }

    /// The offset `a` that puts `z` on the level set.
    pub fn offset_through(&self, z: &Vector) -> Result<f64> {
        for y in [&self.y1, &self.y2] {
            let dist = (z - y).norm();
            if dist < SINGULAR_EXCLUSION {
                return Err(Error::Singular { distance: dist });
            }
        }
        let value = self.with_offset(0.0).raw_field().value(z);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Singular { distance: 0.0 })
        }
    }
}

/// `|x - y2|^-2 - |x - y1|^-2 - a`.
#[derive(Clone, Debug)]
pub struct InverseSquareDifference {
    pub y1: Vector,
    pub y2: Vector,
    pub a: f64,
}

fn inv_sq(x: &Vector, y: &Vector) -> (f64, Vector, Matrix) {
    let r = x - y;
    let s2 = r.norm_squared();
    let d = x.len();
    let value = 1.0 / s2;
    let grad = &r * (-2.0 / (s2 * s2));
    let hess = Matrix::identity(d, d) * (-2.0 / (s2 * s2)) + &r * r.transpose() * (8.0 / (s2 * s2 * s2));
    (value, grad, hess)
}

impl ScalarField for InverseSquareDifference {
    fn dim(&self) -> usize {
        self.y1.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        1.0 / (x - &self.y2).norm_squared() - 1.0 / (x - &self.y1).norm_squared() - self.a
    }
    fn gradient(&self, x: &Vector) -> Vector {
        inv_sq(x, &self.y2).1 - inv_sq(x, &self.y1).1
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        inv_sq(x, &self.y2).2 - inv_sq(x, &self.y1).2
    }
}

/// `c(x, y1) - c(x, y2) - a` for any cost; NaN at singular points.
#[derive(Clone, Debug)]
pub struct CostDifference {
    pub model: Arc<dyn Cost>,
    pub y1: Vector,
    pub y2: Vector,
    pub a: f64,
}

impl ScalarField for CostDifference {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        match (self.model.value(x, &self.y1), self.model.value(x, &self.y2)) {
            (Ok(c1), Ok(c2)) => c1 - c2 - self.a,
            _ => f64::NAN,
        }
    }
    fn gradient(&self, x: &Vector) -> Vector {
        match (self.model.grad_x(x, &self.y1), self.model.grad_x(x, &self.y2)) {
            (Ok(g1), Ok(g2)) => g1 - g2,
            _ => Vector::from_element(self.dim(), f64::NAN),
        }
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        match (self.model.hess_xx(x, &self.y1), self.model.hess_xx(x, &self.y2)) {
            (Ok(h1), Ok(h2)) => h1 - h2,
            _ => Matrix::from_element(self.dim(), self.dim(), f64::NAN),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SublevelWarning {
    /// The level set reaches infinity; no side of it is bounded.
    Unbounded,
    /// The field has zero Hessian: the level set is a hyperplane.
    Affine,
}

/// An oriented sub-level boundary with its diagnostics.
#[derive(Clone, Debug)]
pub struct SublevelSurface {
    pub spec: SublevelSpec,
    pub surface: ImplicitSurface,
    /// True when the raw field was negated by the orientation pass.
    pub flipped: bool,
    pub warnings: Vec<SublevelWarning>,
}

impl SublevelSurface {
    pub fn is_bounded(&self) -> bool {
        !self.warnings.contains(&SublevelWarning::Unbounded)
    }
}

fn far_directions(d: usize) -> Vec<Vector> {
    if d == 2 {
        return (0..32)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 32.0;
                Vector::from_column_slice(&[t.cos(), t.sin()])
            })
            .collect();
    }
    let mut dirs = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = Vector::zeros(d);
            e[i] = s;
            dirs.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    dirs.extend((0..64).map(|_| random_unit(&mut rng, d)));
    dirs
}

fn grid_points(bounds: &BoundingBox, per_axis: usize) -> Vec<Vector> {
    let d = bounds.lo.len();
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut k| {
            Vector::from_fn(d, |i, _| {
                let idx = k % per_axis;
                k /= per_axis;
                let f = idx as f64 / (per_axis - 1) as f64;
                bounds.lo[i] + f * (bounds.hi[i] - bounds.lo[i])
            })
        })
        .collect()
}

/// Builds the oriented sub-level boundary `N(y1, y2, a)`.
///
/// The far-field sign of the raw field (sampled on a large sphere around the
/// foci) decides the orientation: if it is positive everywhere the bounded
/// side is `{psi < 0}`, if negative everywhere the field is negated, and mixed
/// signs mean the level set is unbounded. The interior probe is the focus
/// midpoint when it lies inside, otherwise the most interior point of a grid
/// scan of the box plus rings at the exclusion radius around both foci.
pub fn build_sublevel_psi(spec: &SublevelSpec) -> Result<SublevelSurface> {
    let d = spec.dim();
    let field = spec.raw_field();
    let mid = (&spec.y1 + &spec.y2) * 0.5;
    let far_radius = 100.0 * (spec.bounds.diagonal() + (&spec.y1 - &spec.y2).norm());
    let far: Vec<f64> = far_directions(d)
        .iter()
        .map(|u| field.value(&(&mid + u * far_radius)))
        .filter(|v| v.is_finite())
        .collect();
    let mut warnings = Vec::new();
    let sign = if !far.is_empty() && far.iter().all(|v| *v > 0.0) {
        1.0
    } else if !far.is_empty() && far.iter().all(|v| *v < 0.0) {
        -1.0
    } else {
        warnings.push(SublevelWarning::Unbounded);
        1.0
    };

    let allowed = |x: &Vector| {
        (x - &spec.y1).norm() >= SINGULAR_EXCLUSION * (1.0 - 1e-12)
            && (x - &spec.y2).norm() >= SINGULAR_EXCLUSION * (1.0 - 1e-12)
    };
    let oriented = |x: &Vector| sign * field.value(x);

    let probe = if allowed(&mid) && oriented(&mid) < 0.0 {
        Some(mid.clone())
    } else {
        let per_axis = match d {
            2 => 81,
            3 => 21,
            _ => 7,
        };
        let mut candidates = grid_points(&spec.bounds, per_axis);
        let ring = far_directions(d);
        for y in [&spec.y1, &spec.y2] {
            candidates.extend(ring.iter().map(|u| y + u * SINGULAR_EXCLUSION));
        }
        candidates
            .into_iter()
            .filter(|x| allowed(x))
            .map(|x| (oriented(&x), x))
            .filter(|(v, _)| v.is_finite() && *v < 0.0)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, x)| x)
    };
    let probe = probe.ok_or(Error::EmptyLevelSet)?;

    let hess = field.hessian(&probe);
    let grad = field.gradient(&probe);
    if hess.norm() <= 1e-12 * (1.0 + grad.norm()) {
        warnings.push(SublevelWarning::Affine);
    }

    let surface = ImplicitSurface::with_sign(field, sign, probe, spec.bounds.clone());
    Ok(SublevelSurface {
        spec: spec.clone(),
        surface,
        flipped: sign < 0.0,
        warnings,
    })
}

/// Smallest eigenvalue of the tangent-projected Hessian `min_tau tau^T D^2 psi tau`.
pub fn tangential_hessian_min(surface: &ImplicitSurface, x: &Vector) -> Result<f64> {
    let residual = surface.psi(x).abs();
    if !(residual <= ON_SURFACE_TOL) {
        return Err(Error::OffSurface { residual });
    }
    let grad = surface.gradient(x);
    let norm = grad.norm();
    if !(norm > MIN_GRADIENT) {
        return Err(Error::DegenerateGradient { norm });
    }
    let basis = tangent_basis(&(grad / norm));
    let projected = basis.transpose() * surface.hessian(x) * &basis;
    let (values, _) = symmetric_eigen(&projected);
    Ok(values[0])
}

/// Closed-form `d^2 psi / d tau^2` on the inverse-square level set, where
/// `psi = |x - y2|^-2 - |x - y1|^-2 - a`:
///
/// `2/|x-y1|^4 - 2 (1/|x-y1|^2 + a)^2 - 8 ((x-y1).tau)^2 / |x-y1|^6 * a / (1/|x-y1|^2 + a)`.
///
/// Only valid on the set and for tangent `tau`; both are checked.
pub fn closed_form_tangential_hessian_invquad(
    y1: &Vector,
    y2: &Vector,
    a: f64,
    x: &Vector,
    tau: &Vector,
) -> Result<f64> {
    let field = InverseSquareDifference {
        y1: y1.clone(),
        y2: y2.clone(),
        a,
    };
    let residual = field.value(x).abs();
    if !(residual <= 1e-8) {
        return Err(Error::OffSurface { residual });
    }
    if (tau.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter("tau must be a unit vector".into()));
    }
    let grad = field.gradient(x);
    let dot = tau.dot(&grad) / grad.norm();
    if !(dot.abs() <= 1e-8) {
        return Err(Error::NonTangent { dot });
    }
    let r1 = x - y1;
    let s1_sq = r1.norm_squared();
    let inv1 = 1.0 / s1_sq;
    let shifted = inv1 + a;
    if !(shifted > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "1/|x-y1|^2 + a must be positive on the set, got {shifted}"
        )));
    }
    let proj = r1.dot(tau);
    Ok(2.0 * inv1 * inv1 - 2.0 * shifted * shifted - 8.0 * proj * proj * inv1 * inv1 * inv1 * a / shifted)
}

/// Tracing limits for [`trace_level_curve_2d_with`].
#[derive(Clone, Copy, Debug)]
pub struct TraceConfig {
    pub step: f64,
    /// Corrector iterations above which the step is halved.
    pub max_corrector_iters: usize,
    /// Smallest step as a fraction of `step` before the curve counts as lost.
    pub min_step_ratio: f64,
    pub max_vertices: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_TRACE_STEP,
            max_corrector_iters: 5,
            min_step_ratio: 1.0 / 4096.0,
            max_vertices: 2_000_000,
        }
    }
}

/// Predictor-corrector tracing of a planar level curve from `seed`.
pub fn trace_level_curve_2d(surface: &ImplicitSurface, seed: &Vector, step: f64) -> Result<Polyline2D> {
    trace_level_curve_2d_with(
        surface,
        seed,
        &TraceConfig {
            step,
            ..TraceConfig::default()
        },
    )
}

/// Marches counter-clockwise (tangent = normal rotated by +90 degrees): a
/// tangent predictor of length `h` followed by Newton projection. The step is
/// halved when the corrector needs more than `max_corrector_iters` steps or
/// the tangent turns by more than 30 degrees, and regrown on easy steps.
/// Closes when the start point lies within the next step ahead of the
/// current point with an agreeing tangent; returns an open polyline on box
/// exit.
pub fn trace_level_curve_2d_with(surface: &ImplicitSurface, seed: &Vector, config: &TraceConfig) -> Result<Polyline2D> {
    if surface.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: surface.dim(),
        });
    }
    if !(config.step > 0.0) {
        return Err(Error::InvalidParameter("trace step must be positive".into()));
    }
    let tangent_at = |x: &Vector| -> Result<Vector> {
        let n = outward_normal(surface, x)?;
        Ok(Vector::from_column_slice(&[-n[1], n[0]]))
    };
    let (start, _) = project_with_budget(surface, seed, 60).map_err(|_| Error::LostCurve(0))?;
    let t0 = tangent_at(&start)?;
    let mut points = vec![[start[0], start[1]]];
    let mut x = start.clone();
    let mut t = t0.clone();
    let mut h = config.step;
    let min_step = config.step * config.min_step_ratio;
    let mut arclength = 0.0;
    let bounds = surface.bounds();

    while points.len() < config.max_vertices {
        let to_start = &start - &x;
        let ahead = to_start.dot(&t);
        let perp = (&to_start - &t * ahead).norm();
        if arclength > 2.0 * config.step && ahead >= 0.0 && ahead < h && perp < 0.5 * h && t.dot(&t0) > 0.5 {
            if to_start.norm() < 1e-3 * config.step && points.len() > 1 {
                points.pop();
            }
            return Ok(Polyline2D::new(points, true));
        }

        let predicted = &x + &t * h;
        let corrected = project_with_budget(surface, &predicted, 20)
            .ok()
            .filter(|(_, iters)| *iters <= config.max_corrector_iters)
            .and_then(|(p, iters)| tangent_at(&p).ok().map(|tn| (p, tn, iters)))
            .filter(|(p, tn, _)| tn.dot(&t) > (PI / 6.0).cos() && (p - &x).norm() > 0.25 * h);
        match corrected {
            Some((p, tn, iters)) => {
                arclength += (&p - &x).norm();
                points.push([p[0], p[1]]);
                if !bounds.contains(&p) {
                    return Ok(Polyline2D::new(points, false));
                }
                x = p;
                t = tn;
                if iters <= 2 {
                    h = (2.0 * h).min(config.step);
                }
            }
            None => {
                h *= 0.5;
                if h < min_step {
                    return Err(Error::LostCurve(points.len()));
                }
            }
        }
    }
    Err(Error::LostCurve(points.len()))
}

/// Convexity of `c_y(U, y0)` and of its image under `mu = [c_{y,x}(x_ref, y0)]^{-1}`.
#[derive(Clone, Debug, Serialize)]
pub struct CImageVerdict {
    pub image: Convexity,
    pub mu_image: Convexity,
    pub agree: bool,
    pub mu_det: f64,
    #[serde(skip)]
    pub image_curve: Polyline2D,
    #[serde(skip)]
    pub mu_curve: Polyline2D,
}

impl CImageVerdict {
    pub fn is_convex(&self) -> bool {
        self.image.is_convex()
    }
}

/// c-convexity test of a planar domain with respect to `y0`.
///
/// Maps every boundary vertex through `x -> c_y(x, y0)` and certifies the
/// image polygon; `mu` is taken at the first vertex.
pub fn c_image_convexity<C: Cost + ?Sized>(model: &C, boundary: &Polyline2D, y0: &Vector) -> Result<CImageVerdict> {
    if model.dim() != 2 || y0.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: y0.len(),
        });
    }
    let mut image = Vec::with_capacity(boundary.len());
    for k in 0..boundary.len() {
        let x = boundary.vertex(k);
        let dist = (&x - y0).norm();
        if dist < SINGULAR_EXCLUSION {
            return Err(Error::Singular { distance: dist });
        }
        let g = model.grad_y(&x, y0)?;
        image.push([g[0], g[1]]);
    }
    let image_curve = Polyline2D::new(image, boundary.closed);
    let reference = boundary.vertex(0);
    let mixed = mixed_hessian(model, &reference, y0)?;
    let mu = mixed.mu;
    let mu_curve = image_curve.map(|p| {
        let q = &mu * Vector::from_column_slice(&p);
        [q[0], q[1]]
    });
    let image_verdict = polyline_convexity(&image_curve)?;
    let mu_verdict = polyline_convexity(&mu_curve)?;
    Ok(CImageVerdict {
        image: image_verdict,
        mu_image: mu_verdict,
        agree: image_verdict.is_convex() == mu_verdict.is_convex(),
        mu_det: mu.determinant(),
        image_curve,
        mu_curve,
    })
}
