//! Conic fitting with honest error estimates.
//!
//! Fits conic sections to noisy 2D points by a generalized eigenvalue
//! problem with a self-normalizing (gradient outer-product) constraint,
//! corrects the curvature bias of algebraic fitting, reweights once with
//! statistically optimal on-curve gradient weights, and reports a full
//! posterior covariance for the coefficients. On top of the generic fit it
//! provides type-specific estimation (nearest-parabola projection and
//! truncated-Gaussian posterior means for ellipse/hyperbola constraints)
//! and error propagation to derived curve parameters such as the ellipse
//! center. A seeded Monte Carlo harness generates synthetic ensembles for
//! validation.
//!
//! The crate is pure computation: all values are immutable after
//! construction and safe to share across threads.

pub mod conic;
pub mod error;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod propagate;
pub mod synth;
pub mod typed;

pub use conic::{ConicClass, ConicVector, Point2};
pub use error::{Error, Result};
pub use pipeline::{band_value, fit_with_reweight, generic_fit, BandField, GenericFit, Weighting};
pub use propagate::{center_with_errors, ellipse_center, CenterEstimate};
pub use synth::{run_ensemble, CurveKind, CurveSpec, NoiseSpec, PipelineOptions, TrialEnsemble};
pub use typed::{
    project_to_parabola, truncated_mean_factor, type_constrained_mean, ParabolicFit,
    TruncatedPosterior, TypeTarget,
};
