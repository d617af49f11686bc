//! Paraboloids of revolution `P(x) = sigma/2 + Z - |x - z|^2 / (2 sigma)` as
//! graphs over the base space, and the comparison of internally tangent pairs.
//!
//! For downward-opening graphs "inside" means pointwise ordering of heights:
//! `P1 <= P2` puts the region below `P1` inside the region below `P2`.

use std::sync::Arc;

use serde::Serialize;

use crate::geometry::{second_fundamental_form, BoundingBox, ImplicitSurface, ScalarField, TangentFrame};
use crate::linalg::tangent_basis;
use crate::par::{map_range, Exec};
use crate::{Error, Matrix, Result, Vector};

/// Residual bound for value and gradient matching at the contact.
pub const CONTACT_TOL: f64 = 1e-12;
/// Slack in the pointwise ordering test.
pub const ORDERING_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Paraboloid {
    pub sigma: f64,
    pub z: Vec<f64>,
    pub z_last: f64,
}

impl Paraboloid {
    pub fn new(sigma: f64, z: Vec<f64>, z_last: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if z.is_empty() {
            return Err(Error::InvalidParameter(
                "paraboloid needs at least one base coordinate".into(),
            ));
        }
        Ok(Self { sigma, z, z_last })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    fn offset(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(x - Vector::from_column_slice(&self.z))
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        let d = self.offset(x)?;
        Ok(self.sigma / 2.0 + self.z_last - d.norm_squared() / (2.0 * self.sigma))
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        Ok(-self.offset(x)? / self.sigma)
    }

    /// The graph `{x_{n+1} = P(x)}` as a closed-under-the-box implicit surface,
    /// oriented with the upward normal outward.
    pub fn graph_surface(&self) -> Result<ImplicitSurface> {
        let n = self.n();
        let mut interior = Vector::zeros(n + 1);
        interior.rows_mut(0, n).copy_from(&Vector::from_column_slice(&self.z));
        interior[n] = self.z_last;
        let half = 10.0 * (1.0 + self.sigma + self.z_last.abs());
        ImplicitSurface::new(
            Arc::new(GraphField(self.clone())),
            interior.clone(),
            BoundingBox::around(&interior, half),
        )
    }
}

/// `(P(x), DP(x))`.
pub fn paraboloid_eval(par: &Paraboloid, x: &Vector) -> Result<(f64, Vector)> {
    Ok((par.value(x)?, par.gradient(x)?))
}

/// Graph-coordinate second fundamental form `I / (sigma sqrt(1 + |DP|^2))`.
pub fn paraboloid_sff(par: &Paraboloid, x: &Vector) -> Result<Matrix> {
    let g = par.gradient(x)?;
    let scale = 1.0 / (par.sigma * (1.0 + g.norm_squared()).sqrt());
    Ok(Matrix::identity(par.n(), par.n()) * scale)
}

/// Field `x_{n+1} - P(x)` on `R^{n+1}`.
#[derive(Clone, Debug)]
pub struct GraphField(pub Paraboloid);

impl ScalarField for GraphField {
    fn dim(&self) -> usize {
        self.0.n() + 1
    }

    fn value(&self, x: &Vector) -> f64 {
        let n = self.0.n();
        let base = x.rows(0, n).into_owned();
        x[n] - self.0.value(&base).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let n = self.0.n();
        let base = x.rows(0, n).into_owned();
        let mut g = Vector::zeros(n + 1);
        g.rows_mut(0, n)
            .copy_from(&((base - Vector::from_column_slice(&self.0.z)) / self.0.sigma));
        g[n] = 1.0;
        g
    }

    fn hessian(&self, _x: &Vector) -> Matrix {
        let n = self.0.n();
        let mut h = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            h[(i, i)] = 1.0 / self.0.sigma;
        }
        h
    }
}

/// The paraboloid with parameter `sigma1` touching `par2` at base point `x_c`
/// with equal value and gradient.
pub fn align_paraboloid_tangency(sigma1: f64, par2: &Paraboloid, x_c: &Vector) -> Result<Paraboloid> {
    if !(sigma1 > 0.0 && sigma1.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma1}")));
    }
    let z2 = Vector::from_column_slice(&par2.z);
    if x_c.len() != z2.len() {
        return Err(Error::DimensionMismatch {
            expected: z2.len(),
            got: x_c.len(),
        });
    }
    let z1 = x_c - (x_c - &z2) * (sigma1 / par2.sigma);
    let z_last = par2.value(x_c)? - sigma1 / 2.0 + (x_c - &z1).norm_squared() / (2.0 * sigma1);
    Paraboloid::new(sigma1, z1.iter().copied().collect(), z_last)
}

/// Value and gradient mismatch at the contact.
pub fn contact_residuals(par1: &Paraboloid, par2: &Paraboloid, x_c: &Vector) -> Result<(f64, f64)> {
    let (v1, g1) = paraboloid_eval(par1, x_c)?;
    let (v2, g2) = paraboloid_eval(par2, x_c)?;
    Ok(((v1 - v2).abs(), (g1 - g2).amax()))
}

/// Largest gap between the analytic graph form and the implicit-surface second
/// fundamental form at the graph point over `x`, along the lifted tangents
/// `e_i + DP_i e_{n+1}`, each normalised by the induced metric.
pub fn sff_consistency_gap(par: &Paraboloid, x: &Vector) -> Result<f64> {
    let n = par.n();
    let surface = par.graph_surface()?;
    let mut point = Vector::zeros(n + 1);
    point.rows_mut(0, n).copy_from(x);
    point[n] = par.value(x)?;
    let frame = TangentFrame::at(&surface, &point)?;
    let grad = par.gradient(x)?;
    let analytic = paraboloid_sff(par, x)?;
    let mut gap: f64 = 0.0;
    for i in 0..n {
        let mut v = Vector::zeros(n + 1);
        v[i] = 1.0;
        v[n] = grad[i];
        let metric = v.norm_squared();
        let geometric = second_fundamental_form(&surface, &frame, &(&v / metric.sqrt()))?;
        // The graph form is the Hessian term divided by sqrt(1+|DP|^2); along a
        // unit tangent the geometric form divides additionally by the metric.
        gap = gap.max((geometric - analytic[(i, i)] / metric).abs());
    }
    Ok(gap)
}

/// Minimum over matched unit normals of `II_1 - II_2` on the graph surfaces.
///
/// Matching normals on graphs is matching gradients, so the point on `par1`
/// with gradient `g` pairs with the point on `par2` with the same gradient.
pub fn matched_curvature_margin(par1: &Paraboloid, par2: &Paraboloid, gradients: &[Vector]) -> Result<f64> {
    let s1 = par1.graph_surface()?;
    let s2 = par2.graph_surface()?;
    let n = par1.n();
    let mut margin = f64::INFINITY;
    for g in gradients {
        let mut normal = Vector::zeros(n + 1);
        normal.rows_mut(0, n).copy_from(&(-g));
        normal[n] = 1.0;
        let normal = normal.normalize();
        let basis = tangent_basis(&normal);
        let lift = |par: &Paraboloid| -> Result<Vector> {
            let x = Vector::from_column_slice(&par.z) - g * par.sigma;
            let mut p = Vector::zeros(n + 1);
            p.rows_mut(0, n).copy_from(&x);
            p[n] = par.value(&x)?;
            Ok(p)
        };
        let f1 = TangentFrame {
            point: lift(par1)?,
            normal: normal.clone(),
            tangents: basis.clone(),
        };
        let f2 = TangentFrame {
            point: lift(par2)?,
            normal: normal.clone(),
            tangents: basis.clone(),
        };
        for k in 0..basis.ncols() {
            let v = basis.column(k).into_owned();
            margin = margin.min(second_fundamental_form(&s1, &f1, &v)? - second_fundamental_form(&s2, &f2, &v)?);
        }
    }
    Ok(margin)
}

/// Axis-aligned sampling box for the ordering check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSampler {
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl Default for GridSampler {
    fn default() -> Self {
        Self {
            half_width: 5.0,
            points_per_axis: 101,
        }
    }
}

impl GridSampler {
    fn coordinate(&self, k: usize) -> f64 {
        if self.points_per_axis == 1 {
            return 0.0;
        }
        -self.half_width + 2.0 * self.half_width * k as f64 / (self.points_per_axis - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReflectorVerdict {
    pub par1: Paraboloid,
    pub par2: Paraboloid,
    pub contact: Vec<f64>,
    /// `sigma1 <= sigma2`, i.e. `1/sigma1 >= 1/sigma2`.
    pub sigma_dominance: bool,
    /// `P1 <= P2 + tol` at every grid point.
    pub ordering_holds: bool,
    /// `max (P1 - P2)` over the grid.
    pub max_excess: f64,
    pub worst_point: Vec<f64>,
    pub grid_points: usize,
    /// `!sigma_dominance || ordering_holds`.
    pub consistent: bool,
    pub value_residual: f64,
    pub gradient_residual: f64,
    /// `|sqrt(1+|DP1|^2) - sqrt(1+|DP2|^2)|` at the contact.
    pub normal_factor_residual: f64,
    /// Matched-normal margin `II_1 - II_2` from the implicit-surface forms.
    pub curvature_margin: f64,
    pub curvature_dominance: bool,
}

impl ReflectorVerdict {
    pub fn is_forbidden_finding(&self) -> bool {
        !self.consistent
    }
}

pub fn reflector_inclusion(
    par1: &Paraboloid,
    par2: &Paraboloid,
    x_c: &Vector,
    grid: &GridSampler,
) -> Result<ReflectorVerdict> {
    reflector_inclusion_with(par1, par2, x_c, grid, Exec::default())
}

/// Sigma dominance, grid ordering, and their implication for a tangent pair.
pub fn reflector_inclusion_with(
    par1: &Paraboloid,
    par2: &Paraboloid,
    x_c: &Vector,
    grid: &GridSampler,
    exec: Exec,
) -> Result<ReflectorVerdict> {
    let n = par1.n();
    if par2.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: par2.n(),
        });
    }
    if grid.points_per_axis == 0 {
        return Err(Error::InvalidParameter("grid needs at least one point per axis".into()));
    }
    let (value_residual, gradient_residual) = contact_residuals(par1, par2, x_c)?;
    let scale = 1.0 + par2.value(x_c)?.abs() + par2.gradient(x_c)?.amax();
    if value_residual > CONTACT_TOL * scale || gradient_residual > CONTACT_TOL * scale {
        return Err(Error::NotTangent {
            value: value_residual,
            gradient: gradient_residual,
        });
    }
    let g1 = par1.gradient(x_c)?;
    let g2 = par2.gradient(x_c)?;
    let normal_factor_residual = ((1.0 + g1.norm_squared()).sqrt() - (1.0 + g2.norm_squared()).sqrt()).abs();

    let m = grid.points_per_axis;
    let per_row = m.pow((n - 1) as u32);
    let row_results = map_range(exec, m, |row| {
        let mut worst = (f64::NEG_INFINITY, Vector::zeros(n));
        for idx in 0..per_row {
            let mut x = Vector::zeros(n);
            x[0] = grid.coordinate(row);
            let mut rest = idx;
            for j in 1..n {
                x[j] = grid.coordinate(rest % m);
                rest /= m;
            }
            let excess = par1.value(&x)? - par2.value(&x)?;
            if excess > worst.0 {
                worst = (excess, x);
            }
        }
        Ok::<_, Error>(worst)
    });
    let mut worst = (f64::NEG_INFINITY, Vector::zeros(n));
    for r in row_results {
        let r = r?;
        if r.0 > worst.0 {
            worst = r;
        }
    }

    let sigma_dominance = par1.sigma <= par2.sigma;
    let ordering_holds = worst.0 <= ORDERING_TOL;
    let probes: Vec<Vector> = (0..=8)
        .map(|k| {
            let mut g = Vector::zeros(n);
            g[0] = -2.0 + 0.5 * k as f64;
            if n > 1 {
                g[1] = 0.3 * k as f64 - 1.0;
            }
            g
        })
        .chain(std::iter::once(g2.clone()))
        .collect();
    let curvature_margin = matched_curvature_margin(par1, par2, &probes)?;
    Ok(ReflectorVerdict {
        par1: par1.clone(),
        par2: par2.clone(),
        contact: x_c.iter().copied().collect(),
        sigma_dominance,
        ordering_holds,
        max_excess: worst.0,
        worst_point: worst.1.iter().copied().collect(),
        grid_points: m * per_row,
        consistent: !sigma_dominance || ordering_holds,
        value_residual,
        gradient_residual,
        normal_factor_residual,
        curvature_margin,
        curvature_dominance: curvature_margin >= -1e-9,
    })
}
