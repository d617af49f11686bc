//! Numerical geometry for optimal-transport cost functions.
//!
//! The crate evaluates power-law costs `c(x, y) = |x - y|^p / p` together with
//! their derivatives, audits the Ma-Trudinger-Wang (MTW) condition on seeded
//! samples, builds and classifies the boundaries of cost sub-level sets, and
//! checks the rolling-ball inclusion principle: curvature dominance at
//! Gauss-matched points of two convex surfaces, cross-checked against a direct
//! containment oracle. A small reflector module does the same comparison for
//! paraboloids of revolution.
//!
//! Modules:
//! - [`cost`]: cost models, derivative bundles, momentum inversion `y(x, p)`.
//! - [`geometry`]: oriented implicit hypersurfaces, second fundamental form,
//!   Gauss-map inversion, polyline convexity.
//! - [`mtw`]: the MTW contraction and the grid audit.
//! - [`sublevel`]: two-focus sub-level surfaces, tangential Hessian tests,
//!   2D level-curve tracing, c-convexity of domains.
//! - [`rolling`]: tangency alignment, dominance scan, inclusion oracle and the
//!   two verification pipelines.
//! - [`reflector`]: paraboloid support surfaces.
//! - [`report`]: run configuration, report envelopes and the CLI drivers.
//!
//! Data-parallel loops go through [`par`]; the `parallel` feature (on by
//! default) backs them with rayon.

// `!(x > tol)` is used deliberately so that NaN fails every guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mtw;
pub mod par;
pub mod reflector;
pub mod report;
pub mod rolling;
pub mod sublevel;

pub use error::{Error, Result};

/// Dynamically sized column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dynamically sized matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Radius of the ball around a cost singularity that samplers never enter.
pub const SINGULAR_EXCLUSION: f64 = 0.05;
