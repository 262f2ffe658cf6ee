//! Type-specific estimation.
//!
//! The generic posterior is Gaussian in coefficient space. Forcing a
//! parabola means conditioning on the quadric constraint Gᵀ Q G = 0
//! (Q reads off the discriminant); the best estimate is the constrained
//! point nearest the generic solution in the Mahalanobis metric N Ŝ / σ̂².
//! Forcing an ellipse or hyperbola conditions on an inequality instead,
//! which truncates the Gaussian along the conic pencil through the generic
//! solution and the nearest parabola; the posterior mean then follows from
//! the one-dimensional truncated normal.

use crate::conic::{curvature_correct, ConicClass, ConicVector, Mat6, Vec6};
use crate::error::{Error, Result};
use crate::model::{
    generalized_inverse_dropping, schur_reduce, solve_reduced_eigen, EigenSolution, ModelVector,
    ScatterMatrix,
};
use crate::pipeline::GenericFit;

/// The constant quadric matrix with Gᵀ Q G = 4 g₁g₃ − g₂².
pub fn quadric_matrix() -> Mat6 {
    let mut q = Mat6::zeros();
    q[(0, 2)] = 2.0;
    q[(2, 0)] = 2.0;
    q[(1, 1)] = -1.0;
    q
}

/// Scale of the quadric form for relative residuals.
fn quadric_scale(g: &Vec6) -> f64 {
    let q = 4.0 * (g[0] * g[2]).abs() + g[1] * g[1];
    let quad_norm = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
    q.max(1e-8 * quad_norm)
}

/// Target class for a type-constrained fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeTarget {
    Ellipse,
    Hyperbola,
}

impl TypeTarget {
    pub fn as_class(&self) -> ConicClass {
        match self {
            TypeTarget::Ellipse => ConicClass::Ellipse,
            TypeTarget::Hyperbola => ConicClass::Hyperbola,
        }
    }

    /// Sign such that `sign · disc > 0` on the target side.
    fn disc_sign(&self) -> f64 {
        match self {
            TypeTarget::Ellipse => 1.0,
            TypeTarget::Hyperbola => -1.0,
        }
    }
}

/// Best parabolic fit: the constraint-satisfying coefficient vector at the
/// shortest Mahalanobis distance from the generic solution.
#[derive(Debug, Clone)]
pub struct ParabolicFit {
    /// Constrained estimate, curvature-corrected, canonical sign,
    /// normalized against the fit's gradient constraint.
    pub g_bar: ConicVector,
    /// Constrained estimate before curvature correction.
    pub g_bar_raw: ConicVector,
    /// Refinement iterations taken after the first-order step.
    pub iterations: usize,
    /// Relative quadric residual |Ḡᵀ Q Ḡ| / scale at convergence.
    pub residual: f64,
    /// Rank-4 covariance of the constrained estimate.
    pub v_bar: Mat6,
    /// Normalization projector P₀ = G₀ G₀ᵀ Ĉ.
    pub p0: Mat6,
    /// Constraint projector P̄ = Ĉ⁺ Q Ḡ Ḡᵀ Q / (Ḡᵀ Q Ĉ⁺ Q Ḡ).
    pub p_bar: Mat6,
    /// The doubly projected scatter S̄ whose generalized inverse scales the
    /// covariance.
    pub s_bar: Mat6,
}

fn mat6_of(m: &nalgebra::DMatrix<f64>) -> Mat6 {
    Mat6::from_iterator(m.iter().copied())
}

/// Projects the generic fit onto the parabolic constraint surface.
///
/// Starts from the first-order step
/// Ḡ ≃ G₀ − (G₀ᵀQG₀)/(2 G₀ᵀQY₀QG₀) · Y₀QG₀ and refines by alternately
/// re-projecting the offset onto the local constraint normal Y₀QḠ and
/// re-applying the step at the current estimate, renormalizing each pass,
/// until the relative quadric residual falls below 1e-12 (50 iterations cap).
pub fn project_to_parabola(fit: &GenericFit) -> Result<ParabolicFit> {
    let q = quadric_matrix();
    let y0 = mat6_of(fit.y0.matrix());
    let s_hat = mat6_of(fit.scatter.matrix());
    let c_hat = mat6_of(fit.constraint.matrix());
    let g0 = fit.g0_raw.as_vec6();

    let normalize = |g: Vec6| -> Result<Vec6> {
        let norm2 = (c_hat * g).dot(&g);
        if !(norm2 > 0.0) {
            return Err(Error::ProjectionDirectionUndefined);
        }
        Ok(g / norm2.sqrt())
    };

    let mut g = g0;
    let mut iterations = 0usize;
    let mut residual = (g.dot(&(q * g))).abs() / quadric_scale(&g);

    if residual >= 1e-12 {
        // First-order step.
        let d = y0 * (q * g0);
        let denom = 2.0 * g0.dot(&(q * d));
        if denom.abs() < 1e-300 {
            return Err(Error::ProjectionDirectionUndefined);
        }
        g = normalize(g0 - d * (g0.dot(&(q * g0)) / denom))?;

        // Refinement: alternately take the offset from G₀ along the
        // constraint normal at the current estimate and re-apply the step
        // there, i.e. solve f(G₀ + t d) = 0 exactly along the refreshed
        // normal d = Y₀QḠ (the step above is the linearization of this
        // quadratic). Iterate until both the quadric residual and the
        // direction have settled.
        const MAX_ITER: usize = 50;
        loop {
            iterations += 1;
            let d = y0 * (q * g);
            let qa = d.dot(&(q * d));
            let qb = 2.0 * g0.dot(&(q * d));
            let qc = g0.dot(&(q * g0));
            if qb.abs() < 1e-300 {
                return Err(Error::ProjectionDirectionUndefined);
            }
            let disc = qb * qb - 4.0 * qa * qc;
            let t = if disc >= 0.0 && qa.abs() > 1e-300 {
                // Stable small root of qa t² + qb t + qc = 0.
                -2.0 * qc / (qb + qb.signum() * disc.sqrt())
            } else {
                -qc / qb
            };
            let mut next = g0 + d * t;
            // Local Newton polish: the exact root still carries rounding
            // when the step is much larger than G₀ itself.
            for _ in 0..2 {
                let dn = y0 * (q * next);
                let denom = 2.0 * next.dot(&(q * dn));
                if denom.abs() < 1e-300 {
                    break;
                }
                let f = next.dot(&(q * next));
                next -= dn * (f / denom);
            }
            let next = normalize(next)?;
            let step = (next - g).norm();
            g = next;
            residual = (g.dot(&(q * g))).abs() / quadric_scale(&g);
            if residual < 1e-12 && step < 1e-12 * g.norm() {
                break;
            }
            if iterations >= MAX_ITER {
                if residual < 1e-12 {
                    break;
                }
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                });
            }
        }
    }

    let g_bar_raw = ConicVector::from_vec6(g);

    // Projectors onto the normalization and constraint tangents.
    let c_pinv = mat6_of(&fit.constraint.pseudo_inverse()?);
    let qg = q * g;
    let kappa = (c_pinv * qg).dot(&qg);
    if !(kappa.abs() > 1e-300) {
        return Err(Error::ProjectionDirectionUndefined);
    }
    let p0 = g0 * (c_hat * g0).transpose();
    let p_bar = (c_pinv * qg) * qg.transpose() / kappa;

    // Deviations must respect both constraints. The two tangent conditions
    // Aᵀ ΔG = 0 with A = [ĈG₀, QḠ] are removed by the joint oblique
    // projector Π = I − B (AᵀB)⁻¹ Aᵀ, B = [G₀, Ĉ⁺QḠ], which reduces to
    // I − P₀ − P̄ when the cross-coupling G₀ᵀQḠ vanishes.
    let b0 = g0;
    let b1 = c_pinv * qg;
    let a0 = c_hat * g0;
    let a1 = qg;
    let m00 = a0.dot(&b0);
    let m01 = a0.dot(&b1);
    let m10 = a1.dot(&b0);
    let m11 = a1.dot(&b1);
    let det = m00 * m11 - m01 * m10;
    if det.abs() < 1e-300 {
        return Err(Error::ProjectionDirectionUndefined);
    }
    let (i00, i01, i10, i11) = (m11 / det, -m01 / det, -m10 / det, m00 / det);
    let pi = Mat6::identity()
        - b0 * (a0 * i00 + a1 * i10).transpose()
        - b1 * (a0 * i01 + a1 * i11).transpose();
    let mut s_bar = pi.transpose() * s_hat * pi;
    for r in 0..6 {
        for c in 0..r {
            let avg = 0.5 * (s_bar[(r, c)] + s_bar[(c, r)]);
            s_bar[(r, c)] = avg;
            s_bar[(c, r)] = avg;
        }
    }

    // Generalized inverse of the rank-4 S̄, built the same way as Y₀ but
    // dropping the two structural null directions of the reduced pencil.
    let s_bar_dyn = nalgebra::DMatrix::from_iterator(6, 6, s_bar.iter().copied());
    let s_bar_scatter = ScatterMatrix::from_matrix(s_bar_dyn, true);
    let blocks = schur_reduce(&s_bar_scatter, 5)?;
    let reduced = solve_reduced_eigen(&blocks.reduced, &fit.constraint.reduced())?;
    let mut vectors = Vec::with_capacity(5);
    for g_tilde in &reduced.vectors {
        let full = crate::model::reconstruct_full(g_tilde, &blocks.s21, &blocks.s22_inv)?;
        vectors.push(full);
    }
    let sol = EigenSolution {
        lambdas: reduced.lambdas,
        vectors,
        s21: blocks.s21,
        s22_inv: blocks.s22_inv,
    };
    let y_bar = generalized_inverse_dropping(&sol, 2);
    let v_bar_raw = mat6_of(y_bar.matrix()) * (fit.sigma2_hat / fit.n_points as f64);

    // Same linear curvature propagation as the generic covariance.
    let l = crate::conic::curvature_matrix();
    let map = Mat6::identity() + l.transpose() * fit.sigma2_hat;
    let v_bar = map * v_bar_raw * map.transpose();

    let g_bar = curvature_correct(&g_bar_raw, fit.sigma2_hat).canonical_sign();

    Ok(ParabolicFit {
        g_bar,
        g_bar_raw,
        iterations,
        residual,
        v_bar,
        p0,
        p_bar,
        s_bar,
    })
}

/// Mean of a unit Gaussian truncated to [x₀, ∞):
/// √(2/π) e^(−x₀²/2) / erfc(x₀/√2).
///
/// Evaluated through the scaled complementary error function, so it neither
/// overflows nor loses the tail for large |x₀|.
pub fn truncated_mean_factor(x0: f64) -> f64 {
    assert!(x0.is_finite(), "truncation point must be finite");
    let z = x0 / std::f64::consts::SQRT_2;
    if z <= -26.0 {
        // The truncation is so deep in the lower tail that the mean is zero
        // to double precision.
        return 0.0;
    }
    let sqrt_2_over_pi = (2.0 / std::f64::consts::PI).sqrt();
    sqrt_2_over_pi / erfcx(z)
}

/// Scaled complementary error function e^(z²) erfc(z).
fn erfcx(z: f64) -> f64 {
    if z <= 25.0 {
        // Both factors stay representable here.
        libm::erfc(z) * (z * z).exp()
    } else {
        // Asymptotic expansion: erfcx(z) ≈ 1/(z√π) Σ (−1)ᵏ (2k−1)!!/(2z²)ᵏ.
        let inv2z2 = 1.0 / (2.0 * z * z);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=6 {
            term *= -(2.0 * k as f64 - 1.0) * inv2z2;
            sum += term;
        }
        sum / (z * std::f64::consts::PI.sqrt())
    }
}

/// Posterior of a type-constrained (ellipse or hyperbola) fit.
#[derive(Debug, Clone)]
pub struct TruncatedPosterior {
    /// Generic solution (curvature-corrected).
    pub g0: ConicVector,
    /// Generic coefficient covariance.
    pub v0: Mat6,
    /// Nearest parabola (the truncation boundary).
    pub g_bar: ConicVector,
    /// Signed standardized distance of the boundary: negative when the
    /// generic fit is already of the target type.
    pub x0: f64,
    /// Posterior mean, renormalized against the fit's gradient constraint.
    pub mean: ConicVector,
    /// Posterior mean on the pencil before renormalization.
    pub mean_unnormalized: ConicVector,
    /// The enforced type.
    pub target: TypeTarget,
    /// True when the generic solution sat on the boundary and the limiting
    /// pencil direction was used.
    pub boundary_case: bool,
}

/// Posterior mean of the type-constrained fit.
///
/// x₀ = ±√(N (ḠᵀŜḠ/σ̂² − 1)), negative when the generic solution already has
/// the target type; the mean lies on the pencil through G₀ and Ḡ at
/// G₀ + factor(x₀) (Ḡ − G₀)/x₀ and is renormalized afterwards.
pub fn type_constrained_mean(
    fit: &GenericFit,
    pf: &ParabolicFit,
    target: TypeTarget,
) -> Result<TruncatedPosterior> {
    let s_hat = mat6_of(fit.scatter.matrix());
    let c_hat = mat6_of(fit.constraint.matrix());
    let q = quadric_matrix();
    let g0 = fit.g0_raw.as_vec6();
    let g_bar = pf.g_bar_raw.as_vec6();
    let n = fit.n_points as f64;

    if !(fit.sigma2_hat > 0.0) {
        // Noise-free data: the generic fit is exact and the posterior is a
        // point mass. Keep the generic solution if it already matches,
        // otherwise the boundary point is the constrained optimum.
        let class = fit.classify();
        let mean_raw = if class == target.as_class() {
            g0
        } else {
            g_bar
        };
        let mean = finish_mean(mean_raw, &c_hat, fit.sigma2_hat)?;
        return Ok(TruncatedPosterior {
            g0: fit.g0,
            v0: fit.v0,
            g_bar: pf.g_bar,
            x0: if class == target.as_class() {
                f64::NEG_INFINITY
            } else {
                0.0
            },
            mean_unnormalized: ConicVector::from_vec6(mean_raw),
            mean,
            target,
            boundary_case: class != target.as_class(),
        });
    }

    let radicand = (n * ((s_hat * g_bar).dot(&g_bar) / fit.sigma2_hat - 1.0)).max(0.0);
    let correct_type = fit.classify() == target.as_class();
    let x0 = if correct_type {
        -radicand.sqrt()
    } else {
        radicand.sqrt()
    };

    let (mean_raw, boundary_case) = if x0.abs() > 1e-9 {
        let factor = truncated_mean_factor(x0);
        (g0 + (g_bar - g0) * (factor / x0), false)
    } else {
        // Generic solution on the boundary: step along the constraint
        // normal (the limiting pencil direction) by the truncated-mean
        // factor in Mahalanobis units, toward the target side.
        let y0 = mat6_of(fit.y0.matrix());
        let normal = y0 * (q * g0);
        let mah = (s_hat * normal).dot(&normal) * n / fit.sigma2_hat;
        if !(mah > 0.0) {
            return Err(Error::ProjectionDirectionUndefined);
        }
        let step = normal / mah.sqrt() * truncated_mean_factor(0.0);
        let plus = g0 + step;
        let disc_plus = plus.dot(&(q * plus));
        let side = if disc_plus * target.disc_sign() > 0.0 {
            1.0
        } else {
            -1.0
        };
        (g0 + step * side, true)
    };

    let mean = finish_mean(mean_raw, &c_hat, fit.sigma2_hat)?;
    Ok(TruncatedPosterior {
        g0: fit.g0,
        v0: fit.v0,
        g_bar: pf.g_bar,
        x0,
        mean_unnormalized: ConicVector::from_vec6(mean_raw),
        mean,
        target,
        boundary_case,
    })
}

fn finish_mean(mean_raw: Vec6, c_hat: &Mat6, sigma2: f64) -> Result<ConicVector> {
    let norm2 = (c_hat * mean_raw).dot(&mean_raw);
    if !(norm2 > 0.0) {
        return Err(Error::ProjectionDirectionUndefined);
    }
    let normalized = ConicVector::from_vec6(mean_raw / norm2.sqrt());
    Ok(curvature_correct(&normalized, sigma2).canonical_sign())
}

#[allow(dead_code)]
pub(crate) fn model_of(v: &Vec6) -> ModelVector {
    ModelVector::new(v.as_slice().to_vec()).expect("finite nonzero")
}
