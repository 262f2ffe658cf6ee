//! The recommended fitting pipeline.
//!
//! A fit proceeds in two passes: an unweighted self-normalized fit with
//! curvature correction, then exactly one reweighting with on-curve gradient
//! weights and a final weighted fit carrying the full eigensystem, noise
//! estimate and coefficient covariance. Repeated reweighting buys almost
//! nothing; the pipeline never iterates weights more than once.

use nalgebra::{DMatrix, DVector};

use crate::conic::{
    self, build_constraint_cn, curvature_correct, curvature_matrix, design_gradient, design_vector,
    elliptical_frame, ConicClass, ConicVector, Mat6, Point2, Vec6, CONIC_DIM, DEFAULT_CLASSIFY_TOL,
};
use crate::error::{Error, Result};
use crate::model::{
    self, coefficient_covariance, estimate_sigma2, generalized_inverse_y0, solve_partitioned,
    ConstraintMatrix, CovarianceMode, DesignVector, GeneralizedInverse, ScatterMatrix,
};

/// Weighting scheme of a single generic fit.
#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    /// All weights one.
    Unweighted,
    /// Statistically optimal weights (gradients on the estimated curve).
    Optimal(Vec<f64>),
    /// Sampson weights (gradients at the measured points); biased baseline.
    Sampson(Vec<f64>),
}

/// Tag recording which weighting produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingKind {
    Unweighted,
    Optimal,
    Sampson,
}

/// Pipeline switches.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Apply the curvature-bias correction (on by default; disable only for
    /// bias demonstrations).
    pub curvature_correction: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            curvature_correction: true,
        }
    }
}

/// Complete posterior of a generic conic fit.
#[derive(Debug, Clone)]
pub struct GenericFit {
    /// Curvature-corrected coefficient estimate, canonical sign, normalized
    /// against this fit's gradient constraint.
    pub g0: ConicVector,
    /// Uncorrected coefficient estimate.
    pub g0_raw: ConicVector,
    /// All five eigenvalues of the reduced pencil, ascending (λ₀ = σ̂²).
    pub lambdas: [f64; 5],
    /// Curvature-corrected eigenvectors (canonical sign).
    pub eigvecs: [ConicVector; 5],
    /// Noise-variance estimate σ̂² = λ₀ (clamped at zero).
    pub sigma2_hat: f64,
    /// Covariance of the corrected coefficient estimate.
    pub v0: Mat6,
    /// Weights used for this fit, in input point order.
    pub weights: Vec<f64>,
    /// Which weighting scheme produced the fit.
    pub weighting: WeightingKind,
    /// Number of data points.
    pub n_points: usize,
    /// Measured scatter matrix Ŝ.
    pub scatter: ScatterMatrix,
    /// Gradient constraint Ĉ of this fit's weights.
    pub constraint: ConstraintMatrix,
    /// Generalized inverse Y₀ of the scatter, excluding the fit direction.
    pub y0: GeneralizedInverse,
}

impl GenericFit {
    /// Conic class of the corrected estimate at the default tolerance.
    pub fn classify(&self) -> ConicClass {
        self.g0.classify(DEFAULT_CLASSIFY_TOL)
    }

    /// Band field (coefficients plus covariance) of this fit.
    pub fn band_field(&self) -> BandField {
        BandField {
            g: self.g0,
            v: self.v0,
        }
    }
}

/// A conic with a coefficient covariance, enough to evaluate standardized
/// algebraic distances.
#[derive(Debug, Clone)]
pub struct BandField {
    pub g: ConicVector,
    pub v: Mat6,
}

/// Signed standardized algebraic distance Gᵀ D(p) / √(D(p)ᵀ V D(p)).
pub fn band_value(field: &BandField, p: Point2) -> Result<f64> {
    let d = design_vector(p);
    let d6 = Vec6::from_column_slice(d.as_vector().as_slice());
    let var = (field.v * d6).dot(&d6);
    if !(var > 0.0) {
        return Err(Error::DegenerateVarianceDirection);
    }
    Ok(field.g.as_vec6().dot(&d6) / var.sqrt())
}

fn weights_of(mode: &Weighting, n: usize) -> Result<(Vec<f64>, WeightingKind)> {
    match mode {
        Weighting::Unweighted => Ok((vec![1.0; n], WeightingKind::Unweighted)),
        Weighting::Optimal(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
            Ok((w.clone(), WeightingKind::Optimal))
        }
        Weighting::Sampson(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
            Ok((w.clone(), WeightingKind::Sampson))
        }
    }
}

/// One generic fit: scatter and gradient-constraint assembly, Schur-reduced
/// eigensolve, noise estimate, curvature correction of every eigenvector,
/// and the covariance appropriate to the weighting (σ̂² Y₀ / N for optimal
/// weights, the explicit gradient form otherwise).
pub fn generic_fit(points: &[Point2], weighting: Weighting) -> Result<GenericFit> {
    generic_fit_with(points, weighting, FitOptions::default())
}

/// `generic_fit` with explicit pipeline switches.
pub fn generic_fit_with(
    points: &[Point2],
    weighting: Weighting,
    options: FitOptions,
) -> Result<GenericFit> {
    let n = points.len();
    if n < CONIC_DIM {
        return Err(Error::Underdetermined {
            needed: CONIC_DIM,
            got: n,
        });
    }
    for p in points {
        if !p.is_finite() {
            return Err(Error::NonFinite("point coordinate"));
        }
    }
    let (weights, kind) = weights_of(&weighting, n)?;

    let designs: Vec<DesignVector> = points.iter().map(|&p| design_vector(p)).collect();
    let scatter = model::build_scatter(&designs, &weights)?;
    let constraint = build_constraint_cn(points, &weights)?;
    let sol = solve_partitioned(&scatter, &constraint)?;
    let sigma2_hat = estimate_sigma2(&sol);
    let y0 = generalized_inverse_y0(&sol, &constraint)?;

    let raw_vectors: Vec<ConicVector> = sol.vectors.iter().map(ConicVector::from_model).collect();
    let g0_raw = raw_vectors[0];

    let v_raw = match kind {
        WeightingKind::Optimal => {
            coefficient_covariance(&y0, sigma2_hat, n, CovarianceMode::Optimal)?
        }
        WeightingKind::Unweighted | WeightingKind::Sampson => {
            let gradients: Vec<Vec<DesignVector>> = points
                .iter()
                .map(|&p| {
                    let (dx, dy) = design_gradient(p);
                    vec![dx, dy]
                })
                .collect();
            coefficient_covariance(
                &y0,
                sigma2_hat,
                n,
                CovarianceMode::Explicit {
                    designs: &designs,
                    gradients: &gradients,
                    weights: &weights,
                    g0: &g0_raw.to_model(),
                },
            )?
        }
    };

    let correction_sigma2 = if options.curvature_correction {
        sigma2_hat
    } else {
        0.0
    };
    let corrected: Vec<ConicVector> = raw_vectors
        .iter()
        .map(|g| curvature_correct(g, correction_sigma2).canonical_sign())
        .collect();

    // The correction is the linear map (I + σ̂² Lᵀ); propagating it through
    // the covariance leaves the gradient-constraint block untouched because
    // L annihilates the constraint.
    let l = curvature_matrix();
    let map = Mat6::identity() + l.transpose() * correction_sigma2;
    let v_raw6 = Mat6::from_iterator(v_raw.iter().copied());
    let v0 = map * v_raw6 * map.transpose();

    let mut lambdas = [0.0; 5];
    lambdas.copy_from_slice(&sol.lambdas);
    let eigvecs: [ConicVector; 5] = [
        corrected[0],
        corrected[1],
        corrected[2],
        corrected[3],
        corrected[4],
    ];

    Ok(GenericFit {
        g0: corrected[0],
        g0_raw,
        lambdas,
        eigvecs,
        sigma2_hat,
        v0,
        weights,
        weighting: kind,
        n_points: n,
        scatter,
        constraint,
        y0,
    })
}

/// Result of the two-pass pipeline.
#[derive(Debug, Clone)]
pub struct ReweightedFit {
    /// Unweighted preliminary fit.
    pub preliminary: GenericFit,
    /// Final weighted fit (equal to the preliminary when the fallback ran).
    pub final_fit: GenericFit,
    /// True when the preliminary fit had no projection frame (parabolic or
    /// degenerate) and the unweighted result was kept.
    pub used_fallback: bool,
}

/// Preliminary unweighted fit, one reweighting from its projection frame,
/// final weighted fit. Exactly one reweighting, by construction.
pub fn fit_with_reweight(points: &[Point2]) -> Result<ReweightedFit> {
    fit_with_reweight_opts(points, FitOptions::default())
}

/// `fit_with_reweight` with explicit pipeline switches.
pub fn fit_with_reweight_opts(points: &[Point2], options: FitOptions) -> Result<ReweightedFit> {
    let preliminary = generic_fit_with(points, Weighting::Unweighted, options)?;
    match elliptical_frame(&preliminary.g0) {
        Ok(frame) => {
            let w = conic::optimal_weights(points, &preliminary.g0, &frame)?;
            let final_fit = generic_fit_with(points, Weighting::Optimal(w), options)?;
            Ok(ReweightedFit {
                preliminary,
                final_fit,
                used_fallback: false,
            })
        }
        Err(Error::NoEllipticalFrame) | Err(Error::DegenerateConic) => {
            let final_fit = preliminary.clone();
            Ok(ReweightedFit {
                preliminary,
                final_fit,
                used_fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Variance of a fit's algebraic distance at a point, divided by the spatial
/// gradient magnitude: the half-width of the 1σ confidence band measured
/// along the curve normal.
pub fn band_half_width(fit: &GenericFit, p: Point2) -> Result<f64> {
    let d = design_vector(p);
    let d6 = Vec6::from_column_slice(d.as_vector().as_slice());
    let var = (fit.v0 * d6).dot(&d6);
    if !(var > 0.0) {
        return Err(Error::DegenerateVarianceDirection);
    }
    let (zx, zy) = fit.g0.gradient_at(p);
    let grad = zx.hypot(zy);
    if grad == 0.0 {
        return Err(Error::DegenerateVarianceDirection);
    }
    Ok(var.sqrt() / grad)
}

#[allow(dead_code)]
pub(crate) fn designs_of(points: &[Point2]) -> Vec<DesignVector> {
    points.iter().map(|&p| design_vector(p)).collect()
}

#[allow(dead_code)]
pub(crate) fn dmatrix_to_mat6(m: &DMatrix<f64>) -> Mat6 {
    Mat6::from_iterator(m.iter().copied())
}

#[allow(dead_code)]
pub(crate) fn vec6_to_dvector(v: &Vec6) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}
