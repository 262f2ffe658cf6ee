//! Error propagation to derived curve parameters.
//!
//! A scalar or vector parameter ρ = r(G) inherits noise from the fitted
//! coefficients. To leading order its covariance is r′ᵀ V r′, and because
//! the coefficient error has zero mean, its bias comes entirely from the
//! quadratic term: E[Δρ_j] = ½ tr(R″_j V). The ellipse center is supplied
//! as the built-in instance; users can propagate any parameter of their own
//! through the same trait.

use nalgebra::{DMatrix, SMatrix};

use crate::conic::{ConicVector, Mat6, Point2, Vec6};
use crate::error::{Error, Result};
use crate::pipeline::GenericFit;

/// A k-dimensional parameter of the conic coefficients.
pub trait DerivedParam {
    /// Output dimension k.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter value r(G).
    fn evaluate(&self, g: &ConicVector) -> Result<Vec<f64>>;

    /// Jacobian r′ (k×6). The default is a central finite difference with
    /// steps h_m = 1e-5 · max(|g_m|, ‖g‖/10).
    fn gradient(&self, g: &ConicVector) -> Result<DMatrix<f64>> {
        fd_gradient(self, g)
    }

    /// Hessians R″_j (one symmetric 6×6 per component). The default is a
    /// central second difference on the same steps.
    fn hessian(&self, g: &ConicVector) -> Result<Vec<Mat6>> {
        fd_hessian(self, g)
    }
}

fn fd_steps(g: &ConicVector) -> [f64; 6] {
    let norm = g.as_vec6().norm();
    let mut h = [0.0; 6];
    for m in 0..6 {
        h[m] = 1e-5 * g.0[m].abs().max(norm / 10.0);
    }
    h
}

fn shifted(g: &ConicVector, m: usize, delta: f64) -> ConicVector {
    let mut out = *g;
    out.0[m] += delta;
    out
}

/// Central-difference Jacobian of any evaluable parameter.
pub fn fd_gradient<P: DerivedParam + ?Sized>(param: &P, g: &ConicVector) -> Result<DMatrix<f64>> {
    let k = param.len();
    let h = fd_steps(g);
    let mut grad = DMatrix::<f64>::zeros(k, 6);
    for m in 0..6 {
        let plus = param.evaluate(&shifted(g, m, h[m]))?;
        let minus = param.evaluate(&shifted(g, m, -h[m]))?;
        for j in 0..k {
            let d = (plus[j] - minus[j]) / (2.0 * h[m]);
            if !d.is_finite() {
                return Err(Error::ParameterSingular);
            }
            grad[(j, m)] = d;
        }
    }
    Ok(grad)
}

/// Central second-difference Hessians, symmetrized.
pub fn fd_hessian<P: DerivedParam + ?Sized>(param: &P, g: &ConicVector) -> Result<Vec<Mat6>> {
    let k = param.len();
    let h = fd_steps(g);
    let center = param.evaluate(g)?;
    let mut hess = vec![Mat6::zeros(); k];
    for m in 0..6 {
        let pp = param.evaluate(&shifted(g, m, h[m]))?;
        let mm = param.evaluate(&shifted(g, m, -h[m]))?;
        for j in 0..k {
            let v = (pp[j] - 2.0 * center[j] + mm[j]) / (h[m] * h[m]);
            if !v.is_finite() {
                return Err(Error::ParameterSingular);
            }
            hess[j][(m, m)] = v;
        }
    }
    for m in 0..6 {
        for n in m + 1..6 {
            let pp = param.evaluate(&shifted(&shifted(g, m, h[m]), n, h[n]))?;
            let pm = param.evaluate(&shifted(&shifted(g, m, h[m]), n, -h[n]))?;
            let mp = param.evaluate(&shifted(&shifted(g, m, -h[m]), n, h[n]))?;
            let mm = param.evaluate(&shifted(&shifted(g, m, -h[m]), n, -h[n]))?;
            for j in 0..k {
                let v = (pp[j] - pm[j] - mp[j] + mm[j]) / (4.0 * h[m] * h[n]);
                if !v.is_finite() {
                    return Err(Error::ParameterSingular);
                }
                hess[j][(m, n)] = v;
                hess[j][(n, m)] = v;
            }
        }
    }
    Ok(hess)
}

/// Propagated value, bias and covariance of a derived parameter.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub value: Vec<f64>,
    /// E[ρ̂ − ρ] per component: ½ tr(R″ V).
    pub bias: Vec<f64>,
    /// Leading-order covariance r′ V r′ᵀ (k×k).
    pub covariance: DMatrix<f64>,
}

/// Propagates coefficient noise into a derived parameter.
pub fn propagate<P: DerivedParam + ?Sized>(
    param: &P,
    g: &ConicVector,
    v: &Mat6,
) -> Result<Propagated> {
    let k = param.len();
    let value = param.evaluate(g)?;
    if value.iter().any(|x| !x.is_finite()) {
        return Err(Error::ParameterSingular);
    }
    let grad = param.gradient(g)?;
    let hess = param.hessian(g)?;

    let mut bias = vec![0.0; k];
    for j in 0..k {
        let mut tr = 0.0;
        for m in 0..6 {
            for n in 0..6 {
                tr += hess[j][(m, n)] * v[(m, n)];
            }
        }
        bias[j] = 0.5 * tr;
        if !bias[j].is_finite() {
            return Err(Error::ParameterSingular);
        }
    }

    let v_dyn = DMatrix::from_iterator(6, 6, v.iter().copied());
    let covariance = &grad * v_dyn * grad.transpose();
    Ok(Propagated {
        value,
        bias,
        covariance,
    })
}

// ── Ellipse center ──────────────────────────────────────────────────────────

/// Symmetry center of a central conic:
/// c = −[[2g₁, g₂], [g₂, 2g₃]]⁻¹ (g₄, g₅)ᵀ.
pub fn ellipse_center(g: &ConicVector) -> Result<Point2> {
    let disc = g.discriminant();
    let scale = g.0[0].abs().max(g.0[1].abs()).max(g.0[2].abs());
    if disc.abs() <= 1e-14 * scale * scale {
        return Err(Error::ParameterSingular);
    }
    let [a, b, c, d, e, _] = g.0;
    let cx = (-2.0 * c * d + b * e) / disc;
    let cy = (-2.0 * a * e + b * d) / disc;
    let p = Point2::new(cx, cy);
    if !p.is_finite() {
        return Err(Error::ParameterSingular);
    }
    Ok(p)
}

/// The center as a derived parameter: analytic Jacobian (from
/// differentiating the 2×2 solve), finite-difference Hessian.
pub struct CenterParam;

impl DerivedParam for CenterParam {
    fn len(&self) -> usize {
        2
    }

    fn evaluate(&self, g: &ConicVector) -> Result<Vec<f64>> {
        let c = ellipse_center(g)?;
        Ok(vec![c.x, c.y])
    }

    fn gradient(&self, g: &ConicVector) -> Result<DMatrix<f64>> {
        let center = ellipse_center(g)?;
        let [g1, g2, g3, _, _, _] = g.0;
        let a = SMatrix::<f64, 2, 2>::new(2.0 * g1, g2, g2, 2.0 * g3);
        let a_inv = a.try_inverse().ok_or(Error::ParameterSingular)?;
        let c = nalgebra::SVector::<f64, 2>::new(center.x, center.y);

        // ∂c/∂g_m = −A⁻¹ (∂A/∂g_m c + ∂b/∂g_m) with b = (g₄, g₅)ᵀ.
        let da1 = SMatrix::<f64, 2, 2>::new(2.0, 0.0, 0.0, 0.0);
        let da2 = SMatrix::<f64, 2, 2>::new(0.0, 1.0, 1.0, 0.0);
        let da3 = SMatrix::<f64, 2, 2>::new(0.0, 0.0, 0.0, 2.0);
        let e1 = nalgebra::SVector::<f64, 2>::new(1.0, 0.0);
        let e2 = nalgebra::SVector::<f64, 2>::new(0.0, 1.0);

        let cols = [
            -a_inv * (da1 * c),
            -a_inv * (da2 * c),
            -a_inv * (da3 * c),
            -a_inv * e1,
            -a_inv * e2,
            nalgebra::SVector::<f64, 2>::zeros(),
        ];
        let mut grad = DMatrix::<f64>::zeros(2, 6);
        for (m, col) in cols.iter().enumerate() {
            grad[(0, m)] = col[0];
            grad[(1, m)] = col[1];
        }
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::ParameterSingular);
        }
        Ok(grad)
    }
}

/// Center of a fitted conic with its propagated bias and covariance.
#[derive(Debug, Clone)]
pub struct CenterEstimate {
    /// Center as directly calculated from the fitted coefficients.
    pub center: Point2,
    /// Expected bias E[ĉ − c]; subtract it to correct the estimate.
    pub bias: Point2,
    /// 2×2 covariance of the center estimate.
    pub covariance: SMatrix<f64, 2, 2>,
}

impl CenterEstimate {
    /// Bias-corrected center.
    pub fn corrected(&self) -> Point2 {
        Point2::new(self.center.x - self.bias.x, self.center.y - self.bias.y)
    }
}

/// Propagates a generic fit's covariance into its center estimate.
pub fn center_with_errors(fit: &GenericFit) -> Result<CenterEstimate> {
    let prop = propagate(&CenterParam, &fit.g0, &fit.v0)?;
    Ok(CenterEstimate {
        center: Point2::new(prop.value[0], prop.value[1]),
        bias: Point2::new(prop.bias[0], prop.bias[1]),
        covariance: SMatrix::<f64, 2, 2>::new(
            prop.covariance[(0, 0)],
            prop.covariance[(0, 1)],
            prop.covariance[(1, 0)],
            prop.covariance[(1, 1)],
        ),
    })
}

#[allow(dead_code)]
pub(crate) fn vec6(v: &[f64; 6]) -> Vec6 {
    Vec6::from_column_slice(v)
}
