//! The Ma-Trudinger-Wang quantity.
//!
//! `A(x, p) = c_xx(x, y(x, p))` and the contraction
//! `A_{ij,kl} xi_i xi_j eta_k eta_l` is the second derivative of
//! `q(p) = xi^T A(x, p) xi` along `eta`. It is computed by central differences
//! in `p` of the analytic `c_xx`, so no symbolic fourth derivatives are needed.
//! The audit evaluates it on seeded samples and classifies the cost as
//! A3-positive, weak-A3 or violated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::{segment_distance_to_origin, solve_y_from_p, Cost};
use crate::linalg::{random_orthonormal_pair, random_unit};
use crate::par::{map_range, map_slice, Exec};
use crate::{Error, Matrix, Result, Vector};

/// Default classification tolerance.
pub const DEFAULT_POS_TOL: f64 = 1e-5;
/// Step in `t` for the c*-segment formulation.
pub const SEGMENT_STEP: f64 = 1e-3;

/// One evaluation point: `x`, momentum `p_vec`, and an orthonormal pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MtwSample {
    pub x: Vector,
    pub p_vec: Vector,
    pub xi: Vector,
    pub eta: Vector,
}

impl MtwSample {
    pub fn new(x: Vector, p_vec: Vector, xi: Vector, eta: Vector) -> Result<Self> {
        let d = x.len();
        for v in [&p_vec, &xi, &eta] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
        }
        if (xi.norm() - 1.0).abs() > 1e-12 || (eta.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("xi and eta must be unit vectors".into()));
        }
        if xi.dot(&eta).abs() > 1e-12 {
            return Err(Error::InvalidParameter("xi and eta must be orthogonal".into()));
        }
        Ok(Self { x, p_vec, xi, eta })
    }
}

/// `A(x, p) = c_xx(x, y(x, p))`.
pub fn a_matrix<C: Cost + ?Sized>(model: &C, x: &Vector, p_vec: &Vector) -> Result<Matrix> {
    let y = solve_y_from_p(model, x, p_vec)?;
    model.hess_xx(x, &y)
}

fn quad_form<C: Cost + ?Sized>(model: &C, x: &Vector, p_vec: &Vector, xi: &Vector) -> Result<f64> {
    let a = a_matrix(model, x, p_vec)?;
    Ok(xi.dot(&(a * xi)))
}

/// Default step for the momentum differences: `1e-3 (1 + |p|)`.
pub fn default_step(p_vec: &Vector) -> f64 {
    1e-3 * (1.0 + p_vec.norm())
}

/// `A_{ij,kl}(x, p) xi_i xi_j eta_k eta_l` by central differences in `p`.
///
/// Returns one Richardson level `(4 D(h) - D(2h)) / 3` when the plain
/// second differences `D(h)` and `D(2h)` agree to 10%. Otherwise retries at
/// `h/2` and fails with [`Error::StepTooSmall`] if the two extrapolants still
/// disagree. Agreement is measured above the round-off floor of the
/// differences.
pub fn mtw_contraction<C: Cost + ?Sized>(model: &C, sample: &MtwSample, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let q = |s: f64| quad_form(model, &sample.x, &(&sample.p_vec + &sample.eta * s), &sample.xi);
    let q0 = q(0.0)?;
    let second = |step: f64| -> Result<f64> { Ok((q(step)? - 2.0 * q0 + q(-step)?) / (step * step)) };
    let floor = |step: f64| 64.0 * f64::EPSILON * (1.0 + q0.abs()) / (step * step);
    let agree = |a: f64, b: f64, step: f64| (a - b).abs() <= 0.1 * a.abs().max(b.abs()) + floor(step);

    let d_h = second(h)?;
    let d_2h = second(2.0 * h)?;
    let rich_h = (4.0 * d_h - d_2h) / 3.0;
    if agree(d_h, d_2h, h) {
        return Ok(rich_h);
    }
    let d_half = second(0.5 * h)?;
    let rich_half = (4.0 * d_half - d_h) / 3.0;
    if agree(rich_half, rich_h, 0.5 * h) {
        Ok(rich_half)
    } else {
        Err(Error::StepTooSmall { at_h: d_h, at_2h: d_2h })
    }
}

/// `d^2/dt^2 xi^T c_xx(x, y(x, p_t)) xi` along `p_t = (1 - t) p0 + t p1`:
/// central differences with steps [`SEGMENT_STEP`] and twice that, combined
/// by one Richardson level.
pub fn segment_second_derivative<C: Cost + ?Sized>(
    model: &C,
    x: &Vector,
    p0: &Vector,
    p1: &Vector,
    xi: &Vector,
    t: f64,
) -> Result<f64> {
    let h = SEGMENT_STEP;
    let at = |s: f64| p0 * (1.0 - s) + p1 * s;
    if model.power_exponent().is_some()
        && segment_distance_to_origin(&at(t - 2.0 * h), &at(t + 2.0 * h)) < 1e-12 * (1.0 + p0.norm() + p1.norm())
    {
        return Err(Error::SegmentThroughZero);
    }
    let q = |s: f64| quad_form(model, x, &at(s), xi);
    let q_t = q(t)?;
    let second = |step: f64| -> Result<f64> { Ok((q(t + step)? - 2.0 * q_t + q(t - step)?) / (step * step)) };
    Ok((4.0 * second(h)? - second(2.0 * h)?) / 3.0)
}

/// Outcome of the audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    A3Positive,
    WeakA3,
    Violated,
}

impl Classification {
    pub fn from_min(min_value: f64, pos_tol: f64) -> Self {
        if min_value > pos_tol {
            Classification::A3Positive
        } else if min_value < -pos_tol {
            Classification::Violated
        } else {
            Classification::WeakA3
        }
    }
}

/// Sampler and step settings for [`audit_grid`].
#[derive(Clone, Copy, Debug)]
pub struct AuditConfig {
    /// `x` is drawn uniformly from `[-box_half_width, box_half_width]^d`.
    pub box_half_width: f64,
    /// `|p|` is drawn uniformly from this band.
    pub p_band: (f64, f64),
    /// Relative step; the absolute step is `step_scale (1 + |p|)`.
    pub step_scale: f64,
    /// Number of lowest samples whose `(xi, eta)` pair is re-optimised by
    /// rotation within its plane; 0 keeps the raw sampled minimum.
    pub refine_candidates: usize,
    pub exec: Exec,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            box_half_width: 2.0,
            p_band: (0.2, 5.0),
            step_scale: 1e-3,
            refine_candidates: 8,
            exec: Exec::Parallel,
        }
    }
}

/// Serializable copy of the minimising sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessRecord {
    pub index: usize,
    pub x: Vec<f64>,
    pub p_vec: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MtwAuditReport {
    pub cost: String,
    pub classification: Classification,
    pub min_value: f64,
    /// Minimum over the raw samples, before pair refinement.
    pub sampled_min: f64,
    /// Minimum of `value / (|xi|^2 |eta|^2)`; equal to `min_value` for unit pairs.
    pub c0_estimate: f64,
    pub max_value: f64,
    pub witness: WitnessRecord,
    pub samples: usize,
    pub failed_samples: usize,
    pub seed: u64,
    pub pos_tol: f64,
}

/// Draws `n` samples in index order from a ChaCha8 stream seeded with `seed`.
pub fn draw_samples(dim: usize, config: &AuditConfig, n: usize, seed: u64) -> Vec<MtwSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = Vector::from_fn(dim, |_, _| {
                rng.random_range(-config.box_half_width..=config.box_half_width)
            });
            let magnitude = rng.random_range(config.p_band.0..=config.p_band.1);
            let p_vec = random_unit(&mut rng, dim) * magnitude;
            let (xi, eta) = random_orthonormal_pair(&mut rng, dim);
            MtwSample { x, p_vec, xi, eta }
        })
        .collect()
}

/// Evaluates the MTW contraction on `n` seeded samples and classifies the cost.
///
/// The lowest `refine_candidates` samples are then re-optimised over their
/// orthonormal pair (see [`refine_pair`]); the report keeps both minima.
/// Fails when more than 1% of the samples error out. The minimum is reduced
/// in index order, ties going to the lowest index, so the report does not
/// depend on the execution backend.
pub fn audit_grid<C: Cost + ?Sized>(
    model: &C,
    config: &AuditConfig,
    n: usize,
    seed: u64,
    pos_tol: f64,
) -> Result<MtwAuditReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("audit needs at least one sample".into()));
    }
    if !(config.p_band.0 > 0.0 && config.p_band.1 >= config.p_band.0) {
        return Err(Error::InvalidParameter(
            "momentum band must be positive and ordered".into(),
        ));
    }
    let samples = draw_samples(model.dim(), config, n, seed);
    let values = map_range(config.exec, n, |i| {
        let s = &samples[i];
        mtw_contraction(model, s, config.step_scale * (1.0 + s.p_vec.norm()))
    });

    let mut failed = 0;
    let mut first_error = None;
    let mut best: Option<(usize, f64)> = None;
    let mut max_value = f64::NEG_INFINITY;
    let mut scaled_values = vec![None; n];
    for (i, value) in values.into_iter().enumerate() {
        match value {
            Ok(v) => {
                let scaled = v / (samples[i].xi.norm_squared() * samples[i].eta.norm_squared());
                scaled_values[i] = Some(scaled);
                if best.is_none_or(|(_, b)| scaled < b) {
                    best = Some((i, scaled));
                }
                max_value = max_value.max(scaled);
            }
            Err(e) => {
                failed += 1;
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failed * 100 > n || best.is_none() {
        return Err(Error::TooManyFailures {
            failed,
            total: n,
            first: first_error.unwrap_or_default(),
        });
    }
    let (index, sampled_min) = best.expect("checked above");

    let mut ranked: Vec<(usize, f64)> = scaled_values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked.truncate(config.refine_candidates);
    let refined = map_slice(config.exec, &ranked, |&(i, v)| {
        let s = &samples[i];
        refine_pair(model, s, config.step_scale * (1.0 + s.p_vec.norm()))
            .ok()
            .filter(|(_, rv)| *rv < v)
    });
    let mut witness_sample = samples[index].clone();
    let mut min_value = sampled_min;
    let mut witness_index = index;
    for (&(i, _), r) in ranked.iter().zip(refined) {
        if let Some((sample, value)) = r {
            if value < min_value {
                min_value = value;
                witness_index = i;
                witness_sample = sample;
            }
        }
    }

    let w = &witness_sample;
    Ok(MtwAuditReport {
        cost: model.label(),
        classification: Classification::from_min(min_value, pos_tol),
        min_value,
        sampled_min,
        c0_estimate: min_value,
        max_value,
        witness: WitnessRecord {
            index: witness_index,
            x: w.x.iter().copied().collect(),
            p_vec: w.p_vec.iter().copied().collect(),
            xi: w.xi.iter().copied().collect(),
            eta: w.eta.iter().copied().collect(),
            value: min_value,
        },
        samples: n,
        failed_samples: failed,
        seed,
        pos_tol,
    })
}

/// Minimises the contraction over rotations of `(xi, eta)` within their plane.
///
/// In two dimensions this covers every orthonormal pair at `(x, p)`. A 64-point
/// angle sweep over `[0, pi)` is followed by golden-section search around the
/// best angle.
pub fn refine_pair<C: Cost + ?Sized>(model: &C, sample: &MtwSample, h: f64) -> Result<(MtwSample, f64)> {
    let rotated = |theta: f64| {
        let (s, c) = theta.sin_cos();
        MtwSample {
            x: sample.x.clone(),
            p_vec: sample.p_vec.clone(),
            xi: &sample.xi * c + &sample.eta * s,
            eta: &sample.eta * c - &sample.xi * s,
        }
    };
    let eval = |theta: f64| mtw_contraction(model, &rotated(theta), h);
    const GRID: usize = 64;
    let step = std::f64::consts::PI / GRID as f64;
    let mut best = (0.0, eval(0.0)?);
    for k in 1..GRID {
        let theta = k as f64 * step;
        let value = eval(theta)?;
        if value < best.1 {
            best = (theta, value);
        }
    }
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (best.0 - step, best.0 + step);
    let mut m1 = hi - ratio * (hi - lo);
    let mut m2 = lo + ratio * (hi - lo);
    let mut f1 = eval(m1)?;
    let mut f2 = eval(m2)?;
    for _ in 0..60 {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - ratio * (hi - lo);
            f1 = eval(m1)?;
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + ratio * (hi - lo);
            f2 = eval(m2)?;
        }
    }
    for (theta, value) in [(m1, f1), (m2, f2)] {
        if value < best.1 {
            best = (theta, value);
        }
    }
    let mut out = rotated(best.0);
    // re-normalise against drift from the rotation arithmetic
    out.xi = out.xi.normalize();
    out.eta -= &out.xi * out.xi.dot(&out.eta);
    out.eta = out.eta.normalize();
    Ok((out, best.1))
}
