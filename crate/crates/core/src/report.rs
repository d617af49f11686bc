//! Run configuration, report envelopes and the drivers behind the CLI.
//!
//! A configuration is resolved in three layers: built-in defaults, then
//! command-line flags, then an optional TOML file whose keys override both.
//! Every report echoes the fully resolved configuration and is serialized as
//! key-sorted JSON, so identical configs and seeds give byte-identical output
//! apart from `timing_ms`.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::cost::{power_cost, Cost};
use crate::geometry::{
    gauss_inverse, polyline_convexity, ray_hit, weingarten_spectrum, BoundingBox, ImplicitSurface, Polyline2D,
};
use crate::linalg::random_unit;
use crate::mtw::{audit_grid, AuditConfig, Classification};
use crate::par::{map_slice, Exec};
use crate::reflector::{align_paraboloid_tangency, reflector_inclusion_with, GridSampler, Paraboloid};
use crate::rolling::{
    blaschke_verdict_with, random_convex_curve, theorem2_pipeline, InclusionVerdict, RollConfig, Theorem2Config,
};
use crate::sublevel::{build_sublevel_psi, tangential_hessian_min, trace_level_curve_2d, SublevelSpec};
use crate::{Error, Result, Vector};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FINDING: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    MtwAudit,
    Sublevel,
    Roll,
    Reflector,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::MtwAudit => "mtw-audit",
            Subcommand::Sublevel => "sublevel",
            Subcommand::Roll => "roll",
            Subcommand::Reflector => "reflector",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RollScenario {
    /// Circle (sphere) of `inner_radius` against one of `outer_radius`.
    Circles,
    /// Ellipse with `ellipse_axes` against a circle of `outer_radius`.
    Ellipse,
    /// Seeded perturbed convex curve against its `scale` copy.
    Perturbed,
    /// `sweep_seeds` perturbed curves.
    Sweep,
    /// Disk of `disk_radius` tangent inside the sub-level set `N(y1, y2, a)`.
    Theorem2,
}

/// Fully resolved run configuration. Field defaults are listed in [`Default`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Cost exponent, default -2.
    pub p: f64,
    /// Dimension of the base space, default 2.
    pub dim: usize,
    /// First focus; an empty list means `(-1e-3, 0, ...)`.
    pub y1: Vec<f64>,
    /// Second focus; an empty list means `(-1, -1e-2, 0, ...)`.
    pub y2: Vec<f64>,
    /// Level offset, default -2.
    pub a: f64,
    /// MTW audit sample count, default 1000.
    pub samples: usize,
    /// Normals used by the dominance scan and higher-dimensional convexity checks, default 256.
    pub normals: usize,
    /// Containment oracle sample count, default 512.
    pub containment_samples: usize,
    pub seed: u64,
    /// MTW positivity tolerance, default 1e-5.
    pub tol: f64,
    pub dominance_tol: f64,
    pub containment_tol: f64,
    /// Level-curve tracing step, default 0.01.
    pub step: f64,
    /// Half width of the domain box for sub-level sets, default 2.
    pub box_half_width: f64,
    pub audit_box_half_width: f64,
    pub audit_p_band: [f64; 2],
    pub audit_refine: usize,
    /// Audit size used as the gate inside the theorem2 scenario, default 200.
    pub gate_samples: usize,
    pub scenario: RollScenario,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub ellipse_axes: Vec<f64>,
    pub scale: f64,
    pub sweep_seeds: usize,
    /// Contact normal (normalised before use), default `(1, 0, ...)`.
    pub contact_normal: Vec<f64>,
    pub disk_radius: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Horizontal focus of the second paraboloid; empty means the origin.
    pub focus2: Vec<f64>,
    pub focus2_last: f64,
    /// Base-space contact point for the paraboloid pair; empty means `(1, 0, ...)`.
    pub contact: Vec<f64>,
    pub grid_half_width: f64,
    pub grid_points: usize,
    pub sequential: bool,
    pub out: Option<String>,
    pub trace_csv: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            p: -2.0,
            dim: 2,
            y1: Vec::new(),
            y2: Vec::new(),
            a: -2.0,
            samples: 1000,
            normals: 256,
            containment_samples: 512,
            seed: 42,
            tol: 1e-5,
            dominance_tol: 1e-9,
            containment_tol: 1e-7,
            step: 0.01,
            box_half_width: 2.0,
            audit_box_half_width: 2.0,
            audit_p_band: [0.2, 5.0],
            audit_refine: 8,
            gate_samples: 200,
            scenario: RollScenario::Circles,
            inner_radius: 1.0,
            outer_radius: 2.0,
            ellipse_axes: vec![1.0, 1.5],
            scale: 1.5,
            sweep_seeds: 20,
            contact_normal: Vec::new(),
            disk_radius: 0.2,
            sigma1: 0.5,
            sigma2: 1.0,
            focus2: Vec::new(),
            focus2_last: 0.0,
            contact: Vec::new(),
            grid_half_width: 5.0,
            grid_points: 101,
            sequential: false,
            out: None,
            trace_csv: None,
        }
    }
}

fn padded(head: &[f64], dim: usize) -> Vec<f64> {
    let mut v = head.to_vec();
    v.resize(dim, 0.0);
    v.truncate(dim);
    v
}

impl RunConfig {
    /// Layers `flags` and then `file` over the defaults, fills the
    /// dimension-dependent vectors and validates.
    pub fn resolve(flags: &Map<String, Value>, file: Option<&Map<String, Value>>) -> Result<Self> {
        let mut merged = match serde_json::to_value(RunConfig::default())? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        for layer in std::iter::once(flags).chain(file) {
            for (k, v) in layer {
                merged.insert(k.clone(), v.clone());
            }
        }
        let mut config: RunConfig =
            serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))?;
        config.fill_vectors();
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Map<String, Value>> {
        let text = std::fs::read_to_string(path)?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        match serde_json::to_value(table)? {
            Value::Object(m) => Ok(m),
            _ => Err(Error::Config("config file must be a table".into())),
        }
    }

    fn fill_vectors(&mut self) {
        let d = self.dim;
        if self.y1.is_empty() {
            self.y1 = padded(&[-1e-3, 0.0], d);
        }
        if self.y2.is_empty() {
            self.y2 = padded(&[-1.0, -1e-2], d);
        }
        if self.contact_normal.is_empty() {
            self.contact_normal = padded(&[1.0], d);
        }
        if self.focus2.is_empty() {
            self.focus2 = vec![0.0; d];
        }
        if self.contact.is_empty() {
            self.contact = padded(&[1.0], d);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        for (name, v) in [
            ("y1", &self.y1),
            ("y2", &self.y2),
            ("contact_normal", &self.contact_normal),
            ("focus2", &self.focus2),
            ("contact", &self.contact),
        ] {
            if v.len() != self.dim {
                return bad(format!("{name} has {} entries, expected {}", v.len(), self.dim));
            }
        }
        if self.samples == 0 || self.normals == 0 || self.containment_samples == 0 {
            return bad("sample counts must be positive".into());
        }
        if !(self.step > 0.0) || !(self.tol >= 0.0) {
            return bad("step must be positive and tol nonnegative".into());
        }
        if self.grid_points == 0 {
            return bad("grid_points must be positive".into());
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn audit_config(&self) -> AuditConfig {
        AuditConfig {
            box_half_width: self.audit_box_half_width,
            p_band: (self.audit_p_band[0], self.audit_p_band[1]),
            refine_candidates: self.audit_refine,
            exec: self.exec(),
            ..AuditConfig::default()
        }
    }

    fn roll_config(&self) -> RollConfig {
        RollConfig {
            n_normals: self.normals,
            n_samples: self.containment_samples,
            seed: self.seed,
            dominance_tol: self.dominance_tol,
            containment_tol: self.containment_tol,
            exec: self.exec(),
            ..RollConfig::default()
        }
    }

    fn model(&self) -> Result<Arc<dyn Cost>> {
        Ok(Arc::new(power_cost(self.p, self.dim)?))
    }

    fn vector(v: &[f64]) -> Vector {
        Vector::from_column_slice(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportEnvelope {
    pub schema_version: u32,
    pub tool_version: String,
    pub subcommand: String,
    pub status: String,
    pub exit_code: i32,
    pub config_echo: Value,
    pub result: Value,
    pub timing_ms: u64,
}

impl ReportEnvelope {
    /// Key-sorted pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }

    /// Writes to `config_echo.out` when set, otherwise stdout.
    pub fn write(&self, out: Option<&str>) -> Result<()> {
        let text = self.to_json()?;
        match out {
            Some(path) => std::fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

/// Payload plus exit code of one driver.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub result: Value,
    pub exit_code: i32,
}

fn outcome<T: Serialize>(payload: &T, finding: bool) -> Result<Outcome> {
    Ok(Outcome {
        result: serde_json::to_value(payload)?,
        exit_code: if finding { EXIT_FINDING } else { EXIT_OK },
    })
}

pub fn run_mtw_audit(config: &RunConfig) -> Result<Outcome> {
    let model = power_cost(config.p, config.dim)?;
    let report = audit_grid(&model, &config.audit_config(), config.samples, config.seed, config.tol)?;
    outcome(&report, report.classification == Classification::Violated)
}

#[derive(Clone, Debug, Serialize)]
pub struct SublevelReport {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub a: f64,
    pub flipped: bool,
    pub warnings: Vec<crate::sublevel::SublevelWarning>,
    pub interior_point: Vec<f64>,
    /// `convex`, `non-convex`, `unbounded` or `affine`.
    pub verdict: String,
    pub checked_points: usize,
    pub min_tangential_hessian: Option<f64>,
    pub min_curvature: Option<f64>,
    pub max_residual: Option<f64>,
    pub trace: Option<TraceSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceSummary {
    pub vertices: usize,
    pub closed: bool,
    pub step: f64,
    pub convexity: crate::geometry::Convexity,
    pub csv_path: Option<String>,
    /// Convexity verdict of the re-imported CSV equals the in-memory one.
    pub csv_roundtrip_agrees: Option<bool>,
}

pub fn write_polyline_csv(curve: &Polyline2D, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["x", "y"])?;
    for p in &curve.points {
        writer.serialize((p[0], p[1]))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_polyline_csv(path: &Path, closed: bool) -> Result<Polyline2D> {
    let mut reader = csv::Reader::from_reader(File::open(path)?);
    let points = reader
        .deserialize::<(f64, f64)>()
        .map(|r| r.map(|(x, y)| [x, y]))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Polyline2D::new(points, closed))
}

pub fn run_sublevel(config: &RunConfig) -> Result<Outcome> {
    let spec = SublevelSpec::new(
        config.model()?,
        RunConfig::vector(&config.y1),
        RunConfig::vector(&config.y2),
        config.a,
    )?
    .with_bounds(BoundingBox::cube(config.dim, config.box_half_width));
    let built = build_sublevel_psi(&spec)?;
    let surface = &built.surface;
    let mut report = SublevelReport {
        y1: config.y1.clone(),
        y2: config.y2.clone(),
        a: config.a,
        flipped: built.flipped,
        warnings: built.warnings.clone(),
        interior_point: surface.interior_point().iter().copied().collect(),
        verdict: String::new(),
        checked_points: 0,
        min_tangential_hessian: None,
        min_curvature: None,
        max_residual: None,
        trace: None,
    };
    if built.warnings.contains(&crate::sublevel::SublevelWarning::Affine) {
        report.verdict = "affine".into();
        return outcome(&report, false);
    }
    if !built.is_bounded() {
        report.verdict = "unbounded".into();
        return outcome(&report, false);
    }

    let mut polyline_convex = true;
    let points: Vec<Vector> = if config.dim == 2 {
        let seed = ray_hit(surface, &Vector::from_column_slice(&[1.0, 0.0]))?;
        let curve = trace_level_curve_2d(surface, &seed, config.step)?;
        let convexity = if curve.closed {
            polyline_convexity(&curve)?
        } else {
            crate::geometry::Convexity::NonConvex { witness: 0 }
        };
        polyline_convex = curve.closed && convexity.is_convex();
        let mut summary = TraceSummary {
            vertices: curve.len(),
            closed: curve.closed,
            step: config.step,
            convexity,
            csv_path: None,
            csv_roundtrip_agrees: None,
        };
        if let Some(path) = &config.trace_csv {
            write_polyline_csv(&curve, Path::new(path))?;
            let back = read_polyline_csv(Path::new(path), curve.closed)?;
            let again = if back.closed {
                polyline_convexity(&back)?
            } else {
                convexity
            };
            summary.csv_path = Some(path.clone());
            summary.csv_roundtrip_agrees = Some(again == convexity);
        }
        report.trace = Some(summary);
        curve.points.iter().map(|p| Vector::from_column_slice(p)).collect()
    } else {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.seed);
        (0..config.normals)
            .map(|_| gauss_inverse(surface, &random_unit(&mut rng, config.dim)))
            .collect::<Result<Vec<_>>>()?
    };
    let stats = map_slice(config.exec(), &points, |x| {
        Ok::<_, Error>((
            tangential_hessian_min(surface, x)?,
            weingarten_spectrum(surface, x)?[0],
            surface.psi(x).abs(),
        ))
    });
    let (mut h, mut k, mut r) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for s in stats {
        let (hi, ki, ri) = s?;
        h = h.min(hi);
        k = k.min(ki);
        r = r.max(ri);
    }
    report.checked_points = points.len();
    report.min_tangential_hessian = Some(h);
    report.min_curvature = Some(k);
    report.max_residual = Some(r);
    report.verdict = if polyline_convex && h >= -1e-9 {
        "convex"
    } else {
        "non-convex"
    }
    .into();
    outcome(&report, false)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCase {
    pub seed: u64,
    pub verdict: InclusionVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub cases: Vec<SweepCase>,
    pub dominance_true: usize,
    pub inclusion_true: usize,
    /// Cases with dominance but no inclusion.
    pub findings: usize,
}

fn surface_for(config: &RunConfig, shape: &str, radius: f64) -> Result<ImplicitSurface> {
    let origin = Vector::zeros(config.dim);
    match shape {
        "ellipse" => ImplicitSurface::ellipsoid(origin, RunConfig::vector(&config.ellipse_axes)),
        _ => ImplicitSurface::sphere(origin, radius),
    }
}

pub fn run_roll(config: &RunConfig) -> Result<Outcome> {
    let roll = config.roll_config();
    let w = RunConfig::vector(&config.contact_normal);
    match config.scenario {
        RollScenario::Circles | RollScenario::Ellipse => {
            let inner = if config.scenario == RollScenario::Ellipse {
                surface_for(config, "ellipse", 0.0)?
            } else {
                surface_for(config, "circle", config.inner_radius)?
            };
            let outer = surface_for(config, "circle", config.outer_radius)?;
            let verdict = blaschke_verdict_with(&inner, &outer, &w, &roll)?;
            outcome(&verdict, verdict.is_forbidden_finding())
        }
        RollScenario::Perturbed | RollScenario::Sweep => {
            if config.dim != 2 {
                return Err(Error::Config("perturbed curves are planar; use dim = 2".into()));
            }
            let n = if config.scenario == RollScenario::Sweep {
                config.sweep_seeds
            } else {
                1
            };
            let mut cases = Vec::with_capacity(n);
            for s in 0..n as u64 {
                let seed = config.seed + s;
                let curve = random_convex_curve(seed, [0.0, 0.0], config.inner_radius);
                let inner = curve.surface()?;
                let outer = curve.scaled(config.scale).surface()?;
                let verdict = blaschke_verdict_with(&inner, &outer, &w, &RollConfig { seed, ..roll })?;
                cases.push(SweepCase { seed, verdict });
            }
            let findings = cases.iter().filter(|c| c.verdict.is_forbidden_finding()).count();
            let report = SweepReport {
                dominance_true: cases.iter().filter(|c| c.verdict.dominance_holds).count(),
                inclusion_true: cases.iter().filter(|c| c.verdict.inclusion_holds).count(),
                findings,
                cases,
            };
            outcome(&report, findings > 0)
        }
        RollScenario::Theorem2 => {
            let model = config.model()?;
            let y1 = RunConfig::vector(&config.y1);
            let y2 = RunConfig::vector(&config.y2);
            let spec = SublevelSpec::new(model.clone(), y1.clone(), y2.clone(), config.a)?
                .with_bounds(BoundingBox::cube(config.dim, config.box_half_width));
            let built = build_sublevel_psi(&spec)?;
            if !built.is_bounded() {
                return Err(Error::UnboundedSublevel);
            }
            let w = w.normalize();
            let z0 = gauss_inverse(&built.surface, &w)?;
            let disk = ImplicitSurface::sphere(&z0 - &w * config.disk_radius, config.disk_radius)?;
            let t2 = Theorem2Config {
                roll,
                audit: config.audit_config(),
                audit_samples: config.gate_samples,
                audit_seed: config.seed,
                pos_tol: config.tol,
                convexity_samples: config.normals,
                trace_step: config.step,
                ..Theorem2Config::default()
            };
            let verdict = theorem2_pipeline(model, &disk, &y1, &y2, &w, &t2)?;
            outcome(&verdict, verdict.verdict.is_forbidden_finding())
        }
    }
}

pub fn run_reflector(config: &RunConfig) -> Result<Outcome> {
    let par2 = Paraboloid::new(config.sigma2, config.focus2.clone(), config.focus2_last)?;
    let x_c = RunConfig::vector(&config.contact);
    let par1 = align_paraboloid_tangency(config.sigma1, &par2, &x_c)?;
    let grid = GridSampler {
        half_width: config.grid_half_width,
        points_per_axis: config.grid_points,
    };
    let verdict = reflector_inclusion_with(&par1, &par2, &x_c, &grid, config.exec())?;
    outcome(&verdict, verdict.is_forbidden_finding())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::EmptyLevelSet => "empty-level-set",
        Error::UnboundedSublevel => "unbounded",
        Error::NonConvexSublevel(_) => "non-convex-sublevel",
        Error::AuditFailed(_) => "audit-failed",
        Error::NotTangent { .. } => "not-tangent",
        Error::Config(_) => "config",
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
        _ => "numerical",
    }
}

/// Error payload used for failed runs.
pub fn error_payload(e: &Error) -> Value {
    json!({ "error": e.to_string(), "kind": error_kind(e) })
}

/// Runs one subcommand and wraps the outcome (or error) in an envelope.
pub fn execute(subcommand: Subcommand, config: &RunConfig) -> ReportEnvelope {
    let start = Instant::now();
    let result = match subcommand {
        Subcommand::MtwAudit => run_mtw_audit(config),
        Subcommand::Sublevel => run_sublevel(config),
        Subcommand::Roll => run_roll(config),
        Subcommand::Reflector => run_reflector(config),
    };
    let (status, exit_code, result) = match result {
        Ok(o) if o.exit_code == EXIT_FINDING => ("finding", o.exit_code, o.result),
        Ok(o) => ("ok", o.exit_code, o.result),
        Err(e) => ("error", EXIT_ERROR, error_payload(&e)),
    };
    ReportEnvelope {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        subcommand: subcommand.name().into(),
        status: status.into(),
        exit_code,
        config_echo: serde_json::to_value(config).unwrap_or(Value::Null),
        result,
        timing_ms: start.elapsed().as_millis() as u64,
    }
}
