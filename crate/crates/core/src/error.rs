use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cost is singular: |x - y| = {distance:e}")]
    Singular { distance: f64 },
    #[error("zero momentum has no preimage at finite distance")]
    ZeroMomentum,
    #[error("momentum segment passes through zero")]
    SegmentThroughZero,
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("singular mixed Hessian: det = {det:e}")]
    SingularMatrix { det: f64 },
    #[error("finite-difference step unstable: D(h) = {at_h:e}, D(2h) = {at_2h:e}")]
    StepTooSmall { at_h: f64, at_2h: f64 },
    #[error("point is off the surface: |psi| = {residual:e}")]
    OffSurface { residual: f64 },
    #[error("degenerate gradient: |grad psi| = {norm:e}")]
    DegenerateGradient { norm: f64 },
    #[error("direction is not tangent: |v . n| = {dot:e}")]
    NonTangent { dot: f64 },
    #[error("polyline is open")]
    OpenCurve,
    #[error("polyline has too few points: {0}")]
    TooFewPoints(usize),
    #[error("no point of the sub-level region found in the domain box")]
    EmptyLevelSet,
    #[error("level curve lost after {0} vertices")]
    LostCurve(usize),
    #[error("sub-level set is unbounded")]
    UnboundedSublevel,
    #[error("sub-level set is not convex: {0}")]
    NonConvexSublevel(String),
    #[error("cost failed the MTW gate: {0}")]
    AuditFailed(String),
    #[error("{failed} of {total} samples failed; first error: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error("paraboloids are not tangent at the contact (value {value:e}, gradient {gradient:e})")]
    NotTangent { value: f64, gradient: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
