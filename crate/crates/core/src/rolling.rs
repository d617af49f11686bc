//! Rolling-ball inclusion checks.
//!
//! Two convex surfaces are compared at Gauss-matched points (equal outward
//! normals). If the inner surface bends at least as much as the outer one in
//! every matched tangent direction, internal tangency at one point forces
//! global containment. The scan here measures the dominance margin; an
//! independent oracle samples the translated inner surface and evaluates the
//! outer field. The implication dominance => inclusion is the only direction
//! ever asserted.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::Cost;
use crate::geometry::{
    gauss_inverse, outward_normal, polyline_convexity, second_fundamental_form, shape_matrix, weingarten_spectrum,
    BoundingBox, ImplicitSurface, Polyline2D, ScalarField, TangentFrame,
};
use crate::linalg::{random_tangent, random_unit, symmetric_eigen, tangent_basis};
use crate::mtw::{audit_grid, AuditConfig, Classification, DEFAULT_POS_TOL};
use crate::par::{map_range, map_slice, Exec};
use crate::sublevel::{
    build_sublevel_psi, c_image_convexity, tangential_hessian_min, trace_level_curve_2d, SublevelSpec, SublevelWarning,
    DEFAULT_TRACE_STEP,
};
use crate::{Error, Matrix, Result, Vector};

const CONTAINMENT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Sampling sizes and tolerances shared by the scan, the oracle and the verdict.
#[derive(Clone, Copy, Debug)]
pub struct RollConfig {
    pub n_normals: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Random tangent directions per normal, on top of the basis directions.
    pub random_tangents: usize,
    /// Dominance holds when the margin is at least `-dominance_tol`.
    pub dominance_tol: f64,
    /// Inclusion holds when the largest outer-field value is at most this.
    pub containment_tol: f64,
    pub exec: Exec,
}

impl Default for RollConfig {
    fn default() -> Self {
        Self {
            n_normals: 256,
            n_samples: 512,
            seed: 42,
            random_tangents: 8,
            dominance_tol: 1e-9,
            containment_tol: 1e-7,
            exec: Exec::Parallel,
        }
    }
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Translation moving `inner` so it touches `outer` at the outer point with normal `w`.
pub fn align_internal_tangency(inner: &ImplicitSurface, outer: &ImplicitSurface, w: &Vector) -> Result<Vector> {
    let x_inner = gauss_inverse(inner, w)?;
    let x_outer = gauss_inverse(outer, w)?;
    Ok(x_outer - x_inner)
}

/// Point gap and normal gap at the contact after translating `inner` by `t`.
pub fn tangency_residual(
    inner: &ImplicitSurface,
    outer: &ImplicitSurface,
    w: &Vector,
    t: &Vector,
) -> Result<(f64, f64)> {
    let moved = inner.translated(t);
    let contact = gauss_inverse(outer, w)?;
    let point_gap = moved.psi(&contact).abs() / moved.gradient(&contact).norm();
    let normal_gap = (outward_normal(&moved, &contact)? - outward_normal(outer, &contact)?).norm();
    Ok((point_gap, normal_gap))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceWitness {
    pub normal: Vec<f64>,
    pub inner_point: Vec<f64>,
    pub outer_point: Vec<f64>,
    pub direction: Vec<f64>,
    pub inner_ii: f64,
    pub outer_ii: f64,
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceScan {
    pub holds: bool,
    /// Minimum of `II_inner - II_outer` over all matched samples.
    pub margin: f64,
    pub witness: DominanceWitness,
    pub n_normals: usize,
}

fn shared_frame(point: Vector, w: &Vector, tangents: &Matrix) -> TangentFrame {
    TangentFrame {
        point,
        normal: w.clone(),
        tangents: tangents.clone(),
    }
}

/// Compares second fundamental forms at one matched normal.
///
/// Directions tried: the shared basis, the supplied random tangents, and the
/// eigenvector of the smallest eigenvalue of `S_inner - S_outer` (the exact
/// minimiser over unit tangents).
fn compare_at_normal(
    inner: &ImplicitSurface,
    outer: &ImplicitSurface,
    w: &Vector,
    extra: &[Vector],
) -> Result<DominanceWitness> {
    let x_in = gauss_inverse(inner, w)?;
    let x_out = gauss_inverse(outer, w)?;
    let tangents = tangent_basis(w);
    let f_in = shared_frame(x_in.clone(), w, &tangents);
    let f_out = shared_frame(x_out.clone(), w, &tangents);

    let diff = shape_matrix(inner, &f_in)? - shape_matrix(outer, &f_out)?;
    let (_, vecs) = symmetric_eigen(&diff);
    let exact = (&tangents * vecs.column(0)).normalize();

    let mut directions: Vec<Vector> = (0..tangents.ncols()).map(|k| tangents.column(k).into_owned()).collect();
    directions.extend(extra.iter().cloned());
    directions.push(exact);

    let mut best: Option<DominanceWitness> = None;
    for v in &directions {
        let ii_in = second_fundamental_form(inner, &f_in, v)?;
        let ii_out = second_fundamental_form(outer, &f_out, v)?;
        let difference = ii_in - ii_out;
        if best.as_ref().is_none_or(|b| difference < b.difference) {
            best = Some(DominanceWitness {
                normal: to_vec(w),
                inner_point: to_vec(&x_in),
                outer_point: to_vec(&x_out),
                direction: to_vec(v),
                inner_ii: ii_in,
                outer_ii: ii_out,
                difference,
            });
        }
    }
    Ok(best.expect("at least one direction"))
}

pub fn curvature_dominance_scan(
    inner: &ImplicitSurface,
    outer: &ImplicitSurface,
    n_normals: usize,
    seed: u64,
) -> Result<DominanceScan> {
    let config = RollConfig {
        n_normals,
        seed,
        ..RollConfig::default()
    };
    curvature_dominance_scan_with(inner, outer, &config)
}

/// Dominance scan over `config.n_normals` seeded normals.
pub fn curvature_dominance_scan_with(
    inner: &ImplicitSurface,
    outer: &ImplicitSurface,
    config: &RollConfig,
) -> Result<DominanceScan> {
    if inner.dim() != outer.dim() {
        return Err(Error::DimensionMismatch {
            expected: inner.dim(),
            got: outer.dim(),
        });
    }
    if config.n_normals == 0 {
        return Err(Error::InvalidParameter(
            "dominance scan needs at least one normal".into(),
        ));
    }
    let d = inner.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let plan: Vec<(Vector, Vec<Vector>)> = (0..config.n_normals)
        .map(|_| {
            let w = random_unit(&mut rng, d);
            let basis = tangent_basis(&w);
            let extra = (0..config.random_tangents)
                .map(|_| random_tangent(&mut rng, &basis))
                .collect();
            (w, extra)
        })
        .collect();
    let results = map_slice(config.exec, &plan, |(w, extra)| {
        compare_at_normal(inner, outer, w, extra)
    });
    let mut witness: Option<DominanceWitness> = None;
    for r in results {
        let r = r?;
        if witness.as_ref().is_none_or(|b| r.difference < b.difference) {
            witness = Some(r);
        }
    }
    let witness = witness.expect("n_normals > 0");
    Ok(DominanceScan {
        holds: witness.difference >= -config.dominance_tol,
        margin: witness.difference,
        witness,
        n_normals: config.n_normals,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContainmentCheck {
    pub holds: bool,
    /// Largest outer-field value over translated inner samples; positive means outside.
    pub max_violation: f64,
    pub worst_point: Vec<f64>,
    pub n_samples: usize,
}

pub fn inclusion_oracle(
    inner: &ImplicitSurface,
    translation: &Vector,
    outer: &ImplicitSurface,
    n_samples: usize,
    seed: u64,
) -> Result<ContainmentCheck> {
    let config = RollConfig {
        n_samples,
        seed,
        ..RollConfig::default()
    };
    inclusion_oracle_with(inner, translation, outer, &config)
}

/// Samples the inner surface by Gauss inversion of seeded normals, translates
/// the samples and evaluates the oriented outer field there.
pub fn inclusion_oracle_with(
    inner: &ImplicitSurface,
    translation: &Vector,
    outer: &ImplicitSurface,
    config: &RollConfig,
) -> Result<ContainmentCheck> {
    if config.n_samples == 0 {
        return Err(Error::InvalidParameter(
            "inclusion oracle needs at least one sample".into(),
        ));
    }
    let d = inner.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ CONTAINMENT_STREAM);
    let normals: Vec<Vector> = (0..config.n_samples).map(|_| random_unit(&mut rng, d)).collect();
    let values = map_slice(config.exec, &normals, |w| {
        gauss_inverse(inner, w).map(|x| {
            let moved = x + translation;
            (outer.psi(&moved), moved)
        })
    });
    let mut worst: Option<(f64, Vector)> = None;
    for r in values {
        let (value, point) = r?;
        if worst.as_ref().is_none_or(|(b, _)| value > *b) {
            worst = Some((value, point));
        }
    }
    let (max_violation, point) = worst.expect("n_samples > 0");
    Ok(ContainmentCheck {
        holds: max_violation <= config.containment_tol,
        max_violation,
        worst_point: to_vec(&point),
        n_samples: config.n_samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InclusionVerdict {
    pub dominance_holds: bool,
    pub dominance_margin: f64,
    pub inclusion_holds: bool,
    pub max_violation: f64,
    pub n_normals: usize,
    pub n_containment_samples: usize,
    /// `!dominance_holds || inclusion_holds`.
    pub consistent_with_theorem1: bool,
    pub contact_normal: Vec<f64>,
    pub translation: Vec<f64>,
    pub dominance_witness: DominanceWitness,
    pub worst_point: Vec<f64>,
}

impl InclusionVerdict {
    /// Dominance held but containment failed: a contradiction of the inclusion principle.
    pub fn is_forbidden_finding(&self) -> bool {
        !self.consistent_with_theorem1
    }
}

pub fn blaschke_verdict(
    inner: &ImplicitSurface,
    outer: &ImplicitSurface,
    w_contact: &Vector,
    n_normals: usize,
    n_samples: usize,
    seed: u64,
) -> Result<InclusionVerdict> {
    let config = RollConfig {
        n_normals,
        n_samples,
        seed,
        ..RollConfig::default()
    };
    blaschke_verdict_with(inner, outer, w_contact, &config)
}

/// Align at `w_contact`, scan dominance, run the containment oracle.
pub fn blaschke_verdict_with(
    inner: &ImplicitSurface,
    outer: &ImplicitSurface,
    w_contact: &Vector,
    config: &RollConfig,
) -> Result<InclusionVerdict> {
    let w = w_contact.normalize();
    let translation = align_internal_tangency(inner, outer, &w)?;
    let scan = curvature_dominance_scan_with(inner, outer, config)?;
    let containment = inclusion_oracle_with(inner, &translation, outer, config)?;
    Ok(InclusionVerdict {
        dominance_holds: scan.holds,
        dominance_margin: scan.margin,
        inclusion_holds: containment.holds,
        max_violation: containment.max_violation,
        n_normals: scan.n_normals,
        n_containment_samples: containment.n_samples,
        consistent_with_theorem1: !scan.holds || containment.holds,
        contact_normal: to_vec(&w),
        translation: to_vec(&translation),
        dominance_witness: scan.witness,
        worst_point: containment.worst_point,
    })
}

/// Star-shaped planar curve `rho = R (1 + sum_k eps_k cos(k theta + phi_k))`
/// around `center`, as the field `psi = |x - c| - r(theta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialCurve {
    pub center: [f64; 2],
    pub radius: f64,
    /// `(eps_k, phi_k)` for `k = 1, 2, ...`.
    pub modes: Vec<(f64, f64)>,
}

impl RadialCurve {
    /// `(r, r', r'')` at angle `theta`.
    pub fn radial(&self, theta: f64) -> (f64, f64, f64) {
        let mut r = 1.0;
        let mut dr = 0.0;
        let mut ddr = 0.0;
        for (i, (eps, phi)) in self.modes.iter().enumerate() {
            let k = (i + 1) as f64;
            let (s, c) = (k * theta + phi).sin_cos();
            r += eps * c;
            dr -= eps * k * s;
            ddr -= eps * k * k * c;
        }
        (self.radius * r, self.radius * dr, self.radius * ddr)
    }

    /// Signed curvature of the polar curve at `theta`.
    pub fn curvature(&self, theta: f64) -> f64 {
        let (r, dr, ddr) = self.radial(theta);
        (r * r + 2.0 * dr * dr - r * ddr) / (r * r + dr * dr).powf(1.5)
    }

    pub fn min_curvature(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|k| self.curvature(2.0 * PI * k as f64 / samples as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Copy scaled by `s` about the center.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            radius: self.radius * s,
            ..self.clone()
        }
    }

    pub fn max_extent(&self) -> f64 {
        self.radius * (1.0 + self.modes.iter().map(|(e, _)| e.abs()).sum::<f64>())
    }

    pub fn surface(&self) -> Result<ImplicitSurface> {
        let center = Vector::from_column_slice(&self.center);
        let bounds = BoundingBox::around(&center, 1.5 * self.max_extent());
        ImplicitSurface::new(Arc::new(self.clone()), center, bounds)
    }
}

impl ScalarField for RadialCurve {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Vector) -> f64 {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        dx.hypot(dy) - self.radial(dy.atan2(dx)).0
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let rho2 = dx * dx + dy * dy;
        let rho = rho2.sqrt();
        let (_, dr, _) = self.radial(dy.atan2(dx));
        // grad rho - r'(theta) grad theta
        Vector::from_column_slice(&[dx / rho + dr * dy / rho2, dy / rho - dr * dx / rho2])
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let rho2 = dx * dx + dy * dy;
        let rho = rho2.sqrt();
        let (_, dr, ddr) = self.radial(dy.atan2(dx));
        let h_rho = Matrix::from_row_slice(2, 2, &[dy * dy, -dx * dy, -dx * dy, dx * dx]) / (rho2 * rho);
        let g_theta = Vector::from_column_slice(&[-dy / rho2, dx / rho2]);
        let rho4 = rho2 * rho2;
        let h_theta = Matrix::from_row_slice(
            2,
            2,
            &[2.0 * dx * dy, dy * dy - dx * dx, dy * dy - dx * dx, -2.0 * dx * dy],
        ) / rho4;
        h_rho - &g_theta * g_theta.transpose() * ddr - h_theta * dr
    }
}

/// Seeded smooth convex curve: up to four cosine modes, resampled until the
/// curvature stays above `0.05 / radius` on a 4096-point angle grid.
pub fn random_convex_curve(seed: u64, center: [f64; 2], radius: f64) -> RadialCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let modes = (1..=4)
            .map(|k| (rng.random_range(0.0..0.15 / k as f64), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let curve = RadialCurve { center, radius, modes };
        if curve.min_curvature(4096) > 0.05 / radius {
            return curve;
        }
    }
}

/// Settings for [`theorem2_pipeline`].
#[derive(Clone, Copy, Debug)]
pub struct Theorem2Config {
    pub roll: RollConfig,
    pub audit: AuditConfig,
    pub audit_samples: usize,
    pub audit_seed: u64,
    pub pos_tol: f64,
    /// Gauss-inverse samples for the convexity gate when `d > 2`; in the plane
    /// the gate uses the traced level curve.
    pub convexity_samples: usize,
    pub trace_step: f64,
    /// Lower bound on the tangential Hessian accepted by the convexity gate.
    pub convexity_tol: f64,
    /// Normal mismatch above which the contact normal is reported as adjusted.
    pub normal_tol: f64,
}

impl Default for Theorem2Config {
    fn default() -> Self {
        Self {
            roll: RollConfig::default(),
            audit: AuditConfig::default(),
            audit_samples: 200,
            audit_seed: 42,
            pos_tol: DEFAULT_POS_TOL,
            convexity_samples: 256,
            trace_step: DEFAULT_TRACE_STEP,
            convexity_tol: 1e-9,
            normal_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem2Verdict {
    pub verdict: InclusionVerdict,
    /// Offset `a` making the sub-level boundary pass through the contact point.
    pub offset_a: f64,
    pub contact_point: Vec<f64>,
    pub requested_normal: Vec<f64>,
    pub used_normal: Vec<f64>,
    pub normal_adjusted: bool,
    pub normal_mismatch: f64,
    pub audit_classification: Classification,
    pub audit_min: f64,
    pub sublevel_flipped: bool,
    pub sublevel_min_tangential_hessian: f64,
    pub sublevel_min_curvature: f64,
    /// Convexity certificate of the traced boundary (planar case only).
    pub sublevel_polyline_convex: Option<bool>,
    /// Whether `c_y(U, y)` is convex for both foci (planar case only).
    pub domain_c_convex: Option<bool>,
    pub gates_passed: bool,
}

/// Inclusion check of a convex domain `U` in a cost sub-level set.
///
/// Gates, in order: the cost must not violate the MTW audit; the sub-level
/// boundary through the contact point must be bounded, non-affine, with
/// nonnegative tangential Hessian and positive curvature. The offset `a` is
/// chosen so the boundary passes through `z0 = gauss_inverse(U, w_contact)`.
/// If the boundary normal at `z0` differs from `w_contact`, the boundary's own
/// normal is used and the adjustment is reported.
pub fn theorem2_pipeline(
    model: Arc<dyn Cost>,
    u_boundary: &ImplicitSurface,
    y1: &Vector,
    y2: &Vector,
    w_contact: &Vector,
    config: &Theorem2Config,
) -> Result<Theorem2Verdict> {
    let d = model.dim();
    if u_boundary.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: u_boundary.dim(),
        });
    }
    let audit = audit_grid(
        model.as_ref(),
        &config.audit,
        config.audit_samples,
        config.audit_seed,
        config.pos_tol,
    )?;
    if audit.classification == Classification::Violated {
        return Err(Error::AuditFailed(format!(
            "{} has MTW minimum {:e} below -{:e}",
            audit.cost, audit.min_value, config.pos_tol
        )));
    }

    let w = w_contact.normalize();
    let z0 = gauss_inverse(u_boundary, &w)?;
    let base = SublevelSpec::new(model.clone(), y1.clone(), y2.clone(), 0.0)?;
    let offset_a = base.offset_through(&z0)?;
    let spec = base.with_offset(offset_a);
    let built = build_sublevel_psi(&spec)?;
    if built.warnings.contains(&SublevelWarning::Affine) {
        return Err(Error::NonConvexSublevel("level set is affine (zero curvature)".into()));
    }
    if !built.is_bounded() {
        return Err(Error::UnboundedSublevel);
    }
    let outer = &built.surface;

    let (gate_points, polyline_convex) = if d == 2 {
        let curve = trace_level_curve_2d(outer, &z0, config.trace_step)?;
        if !curve.closed {
            return Err(Error::UnboundedSublevel);
        }
        let convex = polyline_convexity(&curve)?.is_convex();
        let points: Vec<Vector> = curve.points.iter().map(|p| Vector::from_column_slice(p)).collect();
        (points, Some(convex))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.roll.seed ^ 0x51ab);
        let normals: Vec<Vector> = (0..config.convexity_samples)
            .map(|_| random_unit(&mut rng, d))
            .collect();
        let points = map_slice(config.roll.exec, &normals, |n| gauss_inverse(outer, n))
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::NonConvexSublevel(format!("gauss inversion failed: {e}")))?;
        (points, None)
    };
    let gate_values = map_slice(config.roll.exec, &gate_points, |x| {
        Ok::<_, Error>((tangential_hessian_min(outer, x)?, weingarten_spectrum(outer, x)?[0]))
    });
    let mut min_hessian = f64::INFINITY;
    let mut min_curvature = f64::INFINITY;
    for r in gate_values {
        let (h, k) = r?;
        min_hessian = min_hessian.min(h);
        min_curvature = min_curvature.min(k);
    }
    if min_hessian < -config.convexity_tol || polyline_convex == Some(false) {
        return Err(Error::NonConvexSublevel(format!(
            "tangential Hessian reaches {min_hessian:e}"
        )));
    }
    if !(min_curvature > 0.0) {
        return Err(Error::NonConvexSublevel(format!(
            "principal curvature reaches {min_curvature:e}"
        )));
    }

    let n_outer = outward_normal(outer, &z0)?;
    let normal_mismatch = (&n_outer - &w).norm();
    let normal_adjusted = normal_mismatch > config.normal_tol;
    let used = if normal_adjusted { n_outer } else { w.clone() };

    let verdict = blaschke_verdict_with(u_boundary, outer, &used, &config.roll)?;

    let domain_c_convex = if d == 2 {
        let boundary = boundary_polyline(u_boundary, 256, config.roll.exec)?;
        let mut all = true;
        for y in [y1, y2] {
            all &= c_image_convexity(model.as_ref(), &boundary, y)?.is_convex();
        }
        Some(all)
    } else {
        None
    };

    Ok(Theorem2Verdict {
        verdict,
        offset_a,
        contact_point: to_vec(&z0),
        requested_normal: to_vec(&w),
        used_normal: to_vec(&used),
        normal_adjusted,
        normal_mismatch,
        audit_classification: audit.classification,
        audit_min: audit.min_value,
        sublevel_flipped: built.flipped,
        sublevel_min_tangential_hessian: min_hessian,
        sublevel_min_curvature: min_curvature,
        sublevel_polyline_convex: polyline_convex,
        domain_c_convex,
        gates_passed: true,
    })
}

/// Closed polyline through Gauss-inverse points at `n` equally spaced normals.
pub fn boundary_polyline(surface: &ImplicitSurface, n: usize, exec: Exec) -> Result<Polyline2D> {
    if surface.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: surface.dim(),
        });
    }
    let points = map_range(exec, n, |k| {
        let t = 2.0 * PI * k as f64 / n as f64;
        gauss_inverse(surface, &Vector::from_column_slice(&[t.cos(), t.sin()])).map(|x| [x[0], x[1]])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Polyline2D::new(points, true))
}
