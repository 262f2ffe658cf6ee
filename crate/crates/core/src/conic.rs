//! Conic-specific geometry.
//!
//! The model instance: 2D points, design vector D(x) = (x², xy, y², x, y, 1),
//! coefficient vector G with Z(x) = Gᵀ D(x) and discriminant 4 g₁g₃ − g₂².
//! This module supplies the self-normalizing constraint built from design
//! gradients, the curvature-bias correction of the constant coefficient,
//! conic classification, confocal (elliptical) coordinate frames with
//! on-curve point projection, and the two gradient weighting schemes.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ConstraintMatrix, DesignVector, ModelVector};

pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat2 = SMatrix<f64, 2, 2>;

/// Model dimension of the conic instance.
pub const CONIC_DIM: usize = 6;
/// Rank of the gradient constraint (the constant monomial has zero gradient).
pub const CONIC_RANK: usize = 5;
/// Default tolerance on the normalized discriminant used by classification.
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-10;

// ── Points and coefficient vectors ──────────────────────────────────────────

/// A 2D data point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Conic coefficient vector (g₁..g₆) for
/// g₁x² + g₂xy + g₃y² + g₄x + g₅y + g₆ = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConicVector(pub [f64; 6]);

/// Conic type by discriminant sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConicClass {
    Ellipse,
    Hyperbola,
    Parabola,
    Degenerate,
}

impl ConicVector {
    pub fn from_vec6(v: Vec6) -> Self {
        Self([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    pub fn as_vec6(&self) -> Vec6 {
        Vec6::from_column_slice(&self.0)
    }

    pub fn from_model(m: &ModelVector) -> Self {
        let v = m.as_vector();
        debug_assert_eq!(v.len(), 6);
        Self([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    pub fn to_model(&self) -> ModelVector {
        ModelVector::new(self.0.to_vec()).expect("conic vector is finite and nonzero")
    }

    /// Algebraic distance Z(p) = Gᵀ D(p).
    pub fn algebraic_value(&self, p: Point2) -> f64 {
        let [a, b, c, d, e, f] = self.0;
        a * p.x * p.x + b * p.x * p.y + c * p.y * p.y + d * p.x + e * p.y + f
    }

    /// Spatial gradient ∇Z(p) = (∂Z/∂x, ∂Z/∂y).
    pub fn gradient_at(&self, p: Point2) -> (f64, f64) {
        let [a, b, c, d, e, _] = self.0;
        (2.0 * a * p.x + b * p.y + d, b * p.x + 2.0 * c * p.y + e)
    }

    /// Discriminant 4 g₁g₃ − g₂² (positive for ellipses).
    pub fn discriminant(&self) -> f64 {
        4.0 * self.0[0] * self.0[2] - self.0[1] * self.0[1]
    }

    /// The symmetric 3×3 homogeneous matrix of the conic.
    pub fn homogeneous_matrix(&self) -> SMatrix<f64, 3, 3> {
        let [a, b, c, d, e, f] = self.0;
        SMatrix::<f64, 3, 3>::new(
            a,
            b / 2.0,
            d / 2.0,
            b / 2.0,
            c,
            e / 2.0,
            d / 2.0,
            e / 2.0,
            f,
        )
    }

    /// Classifies by discriminant sign at tolerance `tol`, with a degeneracy
    /// test on the determinant of the homogeneous 3×3 matrix.
    pub fn classify(&self, tol: f64) -> ConicClass {
        let m = self.homogeneous_matrix();
        let scale = m.norm();
        if scale == 0.0 || m.determinant().abs() < tol * scale * scale * scale {
            return ConicClass::Degenerate;
        }
        let disc = self.discriminant();
        if disc > tol {
            ConicClass::Ellipse
        } else if disc < -tol {
            ConicClass::Hyperbola
        } else {
            ConicClass::Parabola
        }
    }

    /// Canonical sign: largest-magnitude component positive, ties to the
    /// lowest index.
    pub fn canonical_sign(mut self) -> Self {
        let mut best = 0;
        for i in 1..6 {
            if self.0[i].abs() > self.0[best].abs() {
                best = i;
            }
        }
        if self.0[best] < 0.0 {
            for g in &mut self.0 {
                *g = -*g;
            }
        }
        self
    }

    /// Rescales so Gᵀ C G = 1 against the given constraint.
    pub fn normalize_against(&self, c: &ConstraintMatrix) -> Result<Self> {
        let m = self.to_model().normalize_against(c)?;
        Ok(Self::from_model(&m))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for g in &mut out.0 {
            *g *= s;
        }
        out
    }
}

// ── Design vectors and gradients ────────────────────────────────────────────

/// D(p) = (x², xy, y², x, y, 1).
pub fn design_vector(p: Point2) -> DesignVector {
    DesignVector::new(vec![p.x * p.x, p.x * p.y, p.y * p.y, p.x, p.y, 1.0])
        .expect("finite point gives finite design vector")
}

/// Partial derivatives of the design vector:
/// ∂D/∂x = (2x, y, 0, 1, 0, 0), ∂D/∂y = (0, x, 2y, 0, 1, 0).
pub fn design_gradient(p: Point2) -> (DesignVector, DesignVector) {
    let dx = DesignVector::new(vec![2.0 * p.x, p.y, 0.0, 1.0, 0.0, 0.0]).expect("finite");
    let dy = DesignVector::new(vec![0.0, p.x, 2.0 * p.y, 0.0, 1.0, 0.0]).expect("finite");
    (dx, dy)
}

/// The constant matrix L with ∇²D = 2 L D; its only nonzero entries are in
/// the last column (rows of x² and y²).
pub fn curvature_matrix() -> Mat6 {
    let mut l = Mat6::zeros();
    l[(0, 5)] = 1.0;
    l[(2, 5)] = 1.0;
    l
}

// ── Self-normalizing constraint ─────────────────────────────────────────────

/// Raw gradient outer-product sum
/// Σᵢ wᵢ (D_{i,x} D_{i,x}ᵀ + D_{i,y} D_{i,y}ᵀ), without the rank gate.
///
/// Row and column 6 are identically zero because the constant monomial has
/// zero gradient, so the matrix is always in partitioned form.
pub fn constraint_cn_matrix(points: &[Point2], weights: &[f64]) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::NoData);
    }
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: weights.len(),
        });
    }
    for p in points {
        if !p.is_finite() {
            return Err(Error::NonFinite("point coordinate"));
        }
    }
    for (index, &w) in weights.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidWeight { index, value: w });
        }
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        (points[a].x, points[a].y, weights[a])
            .partial_cmp(&(points[b].x, points[b].y, weights[b]))
            .unwrap()
    });
    let c = linalg::pairwise_matrix_sum(order.len(), 6, 6, &|k| {
        let i = order[k];
        let (dx, dy) = design_gradient(points[i]);
        let dx = dx.as_vector();
        let dy = dy.as_vector();
        let mut t = DMatrix::<f64>::zeros(6, 6);
        for r in 0..6 {
            for col in r..6 {
                t[(r, col)] = weights[i] * (dx[r] * dx[col] + dy[r] * dy[col]);
            }
        }
        t
    });
    let mut full = c;
    for r in 0..6 {
        for col in 0..r {
            full[(r, col)] = full[(col, r)];
        }
    }
    Ok(full)
}

/// Self-normalizing constraint C_N with rank 5, validated: fails with
/// `DegeneratePointConfiguration` when the point set does not span the
/// gradient space (the upper 5×5 block is then rank-deficient).
///
/// Gradients are evaluated at the measured points; the sum over points
/// averages out individual deviations.
pub fn build_constraint_cn(points: &[Point2], weights: &[f64]) -> Result<ConstraintMatrix> {
    let full = constraint_cn_matrix(points, weights)?;
    ConstraintMatrix::new(full, CONIC_RANK).map_err(|_| Error::DegeneratePointConfiguration)
}

/// Curvature-bias correction: g₆ → g₆ + σ² (g₁ + g₃).
///
/// Only the constant coefficient changes, so the gradient normalization
/// Gᵀ C_N G is untouched.
pub fn curvature_correct(g: &ConicVector, sigma2: f64) -> ConicVector {
    assert!(sigma2 >= 0.0, "sigma2 must be nonnegative");
    let mut out = *g;
    out.0[5] += sigma2 * (g.0[0] + g.0[2]);
    out
}

// ── Elliptical coordinate frames ────────────────────────────────────────────

/// Confocal coordinate frame of a central conic.
///
/// Coordinates (η, θ) with x = cos θ cosh η f∥ + sin θ sinh η f⊥ + c, where
/// the foci sit at c ± f∥ and f⊥ is f∥ rotated by +90°. An ellipse is a
/// curve of constant η, a hyperbola branch one of constant θ. An exact
/// circle has no focal direction; it falls back to radial projection.
#[derive(Debug, Clone)]
pub struct EllipticalFrame {
    /// Conic center.
    pub center: Point2,
    /// Focal vector f∥ (zero for the circular fallback).
    pub focal: (f64, f64),
    /// The curve's constant coordinate: η₀ for an ellipse, θ₀ for a hyperbola.
    pub curve_coord: f64,
    /// Ellipse or Hyperbola.
    pub class: ConicClass,
    /// Radius of the circular fallback, if active.
    pub circle_radius: Option<f64>,
    /// Semi-axis lengths (transverse, conjugate) in the principal frame.
    pub semi_axes: (f64, f64),
}

impl EllipticalFrame {
    /// f⊥ = (−f∥y, f∥x).
    pub fn focal_perp(&self) -> (f64, f64) {
        (-self.focal.1, self.focal.0)
    }

    /// Point at confocal coordinates (η, θ).
    pub fn point_at(&self, eta: f64, theta: f64) -> Point2 {
        if let Some(r) = self.circle_radius {
            return Point2::new(
                self.center.x + r * theta.cos(),
                self.center.y + r * theta.sin(),
            );
        }
        let (fx, fy) = self.focal;
        let (px, py) = self.focal_perp();
        let u = theta.cos() * eta.cosh();
        let v = theta.sin() * eta.sinh();
        Point2::new(
            self.center.x + u * fx + v * px,
            self.center.y + u * fy + v * py,
        )
    }

    /// Point on the fitted curve at parameter t (θ for an ellipse, η for a
    /// hyperbola branch).
    pub fn curve_point(&self, t: f64) -> Point2 {
        match self.class {
            ConicClass::Ellipse => self.point_at(self.curve_coord, t),
            ConicClass::Hyperbola => self.point_at(t, self.curve_coord),
            _ => unreachable!("frames exist only for central conics"),
        }
    }

    /// Confocal coordinates (η ≥ 0, θ ∈ (−π, π]) of an arbitrary point.
    pub fn coordinates_of(&self, p: Point2) -> Result<(f64, f64)> {
        if let Some(r) = self.circle_radius {
            let dx = p.x - self.center.x;
            let dy = p.y - self.center.y;
            let dist = dx.hypot(dy);
            if dist <= 1e-12 * r {
                return Err(Error::AmbiguousProjection);
            }
            return Ok((dist.max(f64::MIN_POSITIVE).ln() - r.ln(), dy.atan2(dx)));
        }
        let (fx, fy) = self.focal;
        let f = fx.hypot(fy);
        // Focal-frame coordinates: w = (u + i v) / f with u along f∥.
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        if dx.hypot(dy) <= 1e-14 * f {
            return Err(Error::AmbiguousProjection);
        }
        let u = (dx * fx + dy * fy) / (f * f);
        let v = (-dx * fy + dy * fx) / (f * f);
        // Invert w = cos(θ − iη) through the stable real decomposition:
        // with α = (|w+1| + |w−1|)/2 and β = (|w+1| − |w−1|)/2 we get
        // cosh η = α and cos θ = β.
        let rp = (u + 1.0).hypot(v);
        let rm = (u - 1.0).hypot(v);
        let alpha = 0.5 * (rp + rm);
        let beta = (0.5 * (rp - rm)).clamp(-1.0, 1.0);
        let eta = alpha.max(1.0).acosh();
        let mut theta = beta.acos();
        if v < 0.0 {
            theta = -theta;
        }
        Ok((eta, theta))
    }

    /// Projects a point onto the fitted curve by replacing the appropriate
    /// confocal coordinate: η → η₀ (ellipse) or θ → the nearest branch value
    /// of θ₀ (hyperbola). The circular fallback projects radially.
    pub fn nearest_point(&self, p: Point2) -> Result<Point2> {
        if let Some(_r) = self.circle_radius {
            let (_, theta) = self.coordinates_of(p)?;
            return Ok(self.point_at(self.curve_coord, theta));
        }
        let (eta, theta) = self.coordinates_of(p)?;
        match self.class {
            ConicClass::Ellipse => Ok(self.point_at(self.curve_coord, theta)),
            ConicClass::Hyperbola => {
                // The full hyperbola is covered by ±θ₀ and ±(π − θ₀); keep
                // the branch nearest the measured angle.
                let t0 = self.curve_coord;
                let candidates = [
                    t0,
                    -t0,
                    std::f64::consts::PI - t0,
                    t0 - std::f64::consts::PI,
                ];
                let mut best = candidates[0];
                let mut best_d = f64::INFINITY;
                for &cand in &candidates {
                    let mut d = (theta - cand).abs();
                    d = d.min((d - 2.0 * std::f64::consts::PI).abs());
                    if d < best_d {
                        best_d = d;
                        best = cand;
                    }
                }
                Ok(self.point_at(eta, best))
            }
            _ => unreachable!(),
        }
    }
}

/// Builds the confocal frame of a central conic.
///
/// Fails with `NoEllipticalFrame` for parabolic or degenerate input. A
/// quadratic part within 1e-9 of a multiple of the identity activates the
/// circular fallback (the focal direction is then undefined).
pub fn elliptical_frame(g: &ConicVector) -> Result<EllipticalFrame> {
    let class = g.classify(DEFAULT_CLASSIFY_TOL);
    match class {
        ConicClass::Ellipse | ConicClass::Hyperbola => {}
        _ => return Err(Error::NoEllipticalFrame),
    }
    let [a, b, c, d, e, _f] = g.0;
    let disc = g.discriminant();
    // Center: stationary point of Z.
    let cx = (-2.0 * c * d + b * e) / disc;
    let cy = (-2.0 * a * e + b * d) / disc;
    let center = Point2::new(cx, cy);
    if !center.is_finite() {
        return Err(Error::NoEllipticalFrame);
    }
    // Value at the center; the centered conic is x'ᵀ A₂ x' + f0 = 0.
    let f0 = g.algebraic_value(center);
    if f0 == 0.0 {
        return Err(Error::DegenerateConic);
    }

    // Principal axes of A₂ = [[g₁, g₂/2], [g₂/2, g₃]].
    let half_diff = 0.5 * (a - c);
    let off = 0.5 * b;
    let radius = half_diff.hypot(off);
    let mean = 0.5 * (a + c);
    let mu1 = mean - radius;
    let mu2 = mean + radius;
    // Eigenvector angle of the larger eigenvalue mu2: ½ atan2(b, g₁ − g₃).
    let phi2 = 0.5 * off.atan2(half_diff);

    match class {
        ConicClass::Ellipse => {
            // Semi-axes s_i² = −f0/μ_i, both positive for an ellipse.
            let s1_sq = -f0 / mu1;
            let s2_sq = -f0 / mu2;
            if s1_sq <= 0.0 || s2_sq <= 0.0 {
                return Err(Error::DegenerateConic);
            }
            let s1 = s1_sq.sqrt(); // along the mu1 axis
            let s2 = s2_sq.sqrt(); // along the mu2 axis
            let (major, minor, major_phi) = if s1 >= s2 {
                (s1, s2, phi2 - std::f64::consts::FRAC_PI_2)
            } else {
                (s2, s1, phi2)
            };
            if (major - minor).abs() < 1e-9 * major {
                return Ok(EllipticalFrame {
                    center,
                    focal: (0.0, 0.0),
                    curve_coord: 0.0,
                    class,
                    circle_radius: Some(major),
                    semi_axes: (major, minor),
                });
            }
            let f = (major * major - minor * minor).sqrt();
            let focal = (f * major_phi.cos(), f * major_phi.sin());
            // cosh η₀ = a/f, sinh η₀ = b/f.
            let eta0 = (minor / major).atanh();
            Ok(EllipticalFrame {
                center,
                focal,
                curve_coord: eta0,
                class,
                circle_radius: None,
                semi_axes: (major, minor),
            })
        }
        ConicClass::Hyperbola => {
            // One of −f0/μ is positive (transverse axis), the other negative.
            let (mu_t, mu_c, phi_t) = if -f0 / mu1 > 0.0 {
                (mu1, mu2, phi2 - std::f64::consts::FRAC_PI_2)
            } else {
                (mu2, mu1, phi2)
            };
            let st = (-f0 / mu_t).sqrt();
            let sc = (f0 / mu_c).sqrt();
            if !st.is_finite() || !sc.is_finite() {
                return Err(Error::DegenerateConic);
            }
            let f = st.hypot(sc);
            let focal = (f * phi_t.cos(), f * phi_t.sin());
            // cos θ₀ = s_t/f, sin θ₀ = s_c/f.
            let theta0 = sc.atan2(st);
            Ok(EllipticalFrame {
                center,
                focal,
                curve_coord: theta0,
                class,
                circle_radius: None,
                semi_axes: (st, sc),
            })
        }
        _ => unreachable!(),
    }
}

// ── Gradient weights ────────────────────────────────────────────────────────

/// Gradient magnitudes squared with a relative floor: values below
/// 1e-8 of the median are clamped up so that an isolated zero gradient
/// cannot produce an unbounded weight.
fn clamped_inverse_weights(grad_sq: Vec<f64>) -> Result<Vec<f64>> {
    let n = grad_sq.len();
    let mut sorted = grad_sq.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[n / 2];
    if !(median > 0.0) {
        return Err(Error::DegenerateConic);
    }
    let floor = 1e-8 * median;
    Ok(grad_sq
        .into_iter()
        .map(|q| 1.0 / (n as f64 * q.max(floor)))
        .collect())
}

/// Statistically optimal weights wᵢ = 1 / (N Σ_μ (D_{i,μ}ᵀG)²) with the
/// design gradient evaluated on the estimated curve (at the projection of
/// each measured point), which avoids the weighting bias of measured-point
/// gradients.
pub fn optimal_weights(
    points: &[Point2],
    g: &ConicVector,
    frame: &EllipticalFrame,
) -> Result<Vec<f64>> {
    let mut grad_sq = Vec::with_capacity(points.len());
    for &p in points {
        let on_curve = frame.nearest_point(p)?;
        let (zx, zy) = g.gradient_at(on_curve);
        grad_sq.push(zx * zx + zy * zy);
    }
    clamped_inverse_weights(grad_sq)
}

/// Sampson-style weights: the same formula as `optimal_weights` but with the
/// gradient taken at the measured points. Kept as the biased comparison
/// baseline.
pub fn sampson_weights(points: &[Point2], g: &ConicVector) -> Result<Vec<f64>> {
    let mut grad_sq = Vec::with_capacity(points.len());
    for &p in points {
        let (zx, zy) = g.gradient_at(p);
        grad_sq.push(zx * zx + zy * zy);
    }
    clamped_inverse_weights(grad_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_circle() -> ConicVector {
        ConicVector([1.0, 0.0, 1.0, 0.0, 0.0, -1.0])
    }

    #[test]
    fn design_vector_values() {
        let cases = [
            (Point2::new(0.0, 0.0), [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            (Point2::new(2.0, 3.0), [4.0, 6.0, 9.0, 2.0, 3.0, 1.0]),
            (Point2::new(-1.0, 1.0), [1.0, -1.0, 1.0, -1.0, 1.0, 1.0]),
        ];
        for (p, expected) in cases {
            assert_eq!(design_vector(p).as_vector().as_slice(), &expected);
        }
    }

    #[test]
    fn design_gradient_values() {
        let (dx, dy) = design_gradient(Point2::new(0.0, 0.0));
        assert_eq!(dx.as_vector().as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(dy.as_vector().as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let (dx, dy) = design_gradient(Point2::new(1.0, 2.0));
        assert_eq!(dx.as_vector().as_slice(), &[2.0, 2.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(dy.as_vector().as_slice(), &[0.0, 1.0, 4.0, 0.0, 1.0, 0.0]);
    }

    /// Central-difference oracle for the design gradient.
    #[test]
    fn design_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-5;
        for _ in 0..50 {
            let p = Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (dx, dy) = design_gradient(p);
            let fd_x = (design_vector(Point2::new(p.x + h, p.y)).as_vector()
                - design_vector(Point2::new(p.x - h, p.y)).as_vector())
                / (2.0 * h);
            let fd_y = (design_vector(Point2::new(p.x, p.y + h)).as_vector()
                - design_vector(Point2::new(p.x, p.y - h)).as_vector())
                / (2.0 * h);
            assert_relative_eq!(dx.as_vector().clone(), fd_x, epsilon = 1e-8);
            assert_relative_eq!(dy.as_vector().clone(), fd_y, epsilon = 1e-8);
        }
    }

    #[test]
    fn constraint_single_point_origin() {
        // Gradients at the origin are the unit vectors e₄ and e₅.
        let m = constraint_cn_matrix(&[Point2::new(0.0, 0.0)], &[1.0]).unwrap();
        for r in 0..6 {
            for col in 0..6 {
                let expected = if (r, col) == (3, 3) || (r, col) == (4, 4) {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(m[(r, col)], expected);
            }
        }
        // One point cannot span the rank-5 gradient space.
        assert!(matches!(
            build_constraint_cn(&[Point2::new(0.0, 0.0)], &[1.0]),
            Err(Error::DegeneratePointConfiguration)
        ));
    }

    /// Hand outer-product oracle for the point (1, 0): gradients
    /// (2,0,0,1,0,0) and (0,1,0,0,1,0).
    #[test]
    fn constraint_single_point_one_zero() {
        let m = constraint_cn_matrix(&[Point2::new(1.0, 0.0)], &[1.0]).unwrap();
        assert_eq!(m[(0, 0)], 4.0);
        assert_eq!(m[(0, 3)], 2.0);
        assert_eq!(m[(3, 0)], 2.0);
        assert_eq!(m[(3, 3)], 1.0);
        assert_eq!(m[(1, 1)], 1.0);
        assert_eq!(m[(1, 4)], 1.0);
        assert_eq!(m[(4, 1)], 1.0);
        assert_eq!(m[(4, 4)], 1.0);
        let nonzero = [
            (0, 0),
            (0, 3),
            (3, 0),
            (3, 3),
            (1, 1),
            (1, 4),
            (4, 1),
            (4, 4),
        ];
        for r in 0..6 {
            for c in 0..6 {
                if !nonzero.contains(&(r, c)) {
                    assert_eq!(m[(r, c)], 0.0, "({r},{c})");
                }
            }
        }
    }

    #[test]
    fn constraint_last_row_column_zero() {
        let pts: Vec<Point2> = (0..8)
            .map(|i| {
                let t = i as f64 * 0.7;
                Point2::new(t.cos() * 1.5, t.sin() * 0.7)
            })
            .collect();
        let c = build_constraint_cn(&pts, &vec![1.0; 8]).unwrap();
        for i in 0..6 {
            assert_eq!(c.matrix()[(i, 5)], 0.0);
            assert_eq!(c.matrix()[(5, i)], 0.0);
        }
        assert_eq!(c.rank(), 5);
    }

    #[test]
    fn curvature_correction_cases() {
        let g = unit_circle();
        assert_eq!(curvature_correct(&g, 0.0), g);
        let corrected = curvature_correct(&g, 0.01);
        assert_relative_eq!(corrected.0[5], -0.98, epsilon = 1e-15);
        for i in 0..5 {
            assert_eq!(corrected.0[i], g.0[i]);
        }
    }

    #[test]
    fn curvature_correction_preserves_normalization() {
        let pts: Vec<Point2> = (0..12)
            .map(|i| {
                let t = i as f64 * 0.5;
                Point2::new(t.cos(), 0.3 * t.sin())
            })
            .collect();
        let c = build_constraint_cn(&pts, &vec![1.0; 12]).unwrap();
        let g = unit_circle().normalize_against(&c).unwrap();
        let before = (c.matrix() * g.to_model().as_vector()).dot(g.to_model().as_vector());
        let after_vec = curvature_correct(&g, 0.05).to_model();
        let after = (c.matrix() * after_vec.as_vector()).dot(after_vec.as_vector());
        assert_relative_eq!(before, after, epsilon = 1e-14);
    }

    #[test]
    fn laplacian_identity_fixes_l() {
        let l = curvature_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let p = Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let d = design_vector(p);
            let ld = l * d.as_vector().fixed_rows::<6>(0).into_owned();
            let laplacian = Vec6::from_column_slice(&[2.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
            assert_relative_eq!(2.0 * ld, laplacian, epsilon = 1e-14);
        }
    }

    #[test]
    fn l_annihilates_constraint() {
        let pts: Vec<Point2> = (0..9)
            .map(|i| Point2::new((i as f64 * 0.8).cos(), (i as f64 * 0.8).sin() * 0.4))
            .collect();
        let c = build_constraint_cn(&pts, &vec![1.0; 9]).unwrap();
        let l = curvature_matrix();
        let cn = Mat6::from_iterator(c.matrix().iter().copied());
        assert_relative_eq!((l * cn).norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!((cn * l.transpose()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn classify_basic_conics() {
        let tol = DEFAULT_CLASSIFY_TOL;
        assert_eq!(unit_circle().classify(tol), ConicClass::Ellipse);
        let hyperbola = ConicVector([0.0, 1.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(hyperbola.classify(tol), ConicClass::Hyperbola);
        let parabola = ConicVector([1.0, 0.0, 0.0, 0.0, -1.0, 0.0]);
        assert_eq!(parabola.classify(tol), ConicClass::Parabola);
        let line_pair = ConicVector([1.0, 0.0, -1.0, 0.0, 0.0, 0.0]); // x² = y²
        assert_eq!(line_pair.classify(tol), ConicClass::Degenerate);
    }

    #[test]
    fn frame_for_standard_ellipse() {
        // x²/4 + y² = 1.
        let g = ConicVector([0.25, 0.0, 0.0 + 1.0, 0.0, 0.0, -1.0]);
        let frame = elliptical_frame(&g).unwrap();
        assert_relative_eq!(frame.center.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(frame.center.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(frame.focal.0.abs(), 3.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(frame.focal.1, 0.0, epsilon = 1e-12);
        // cosh η₀ = a/f = 2/√3.
        assert_relative_eq!(
            frame.curve_coord.cosh(),
            2.0 / 3.0f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn frame_for_shifted_circle() {
        // (x−1)² + (y−2)² = 1.
        let g = ConicVector([1.0, 0.0, 1.0, -2.0, -4.0, 4.0]);
        let frame = elliptical_frame(&g).unwrap();
        assert_relative_eq!(frame.center.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(frame.center.y, 2.0, epsilon = 1e-12);
        assert!(frame.circle_radius.is_some());
        assert_relative_eq!(frame.circle_radius.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn frame_roundtrip_reproduces_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            // Random posed ellipse.
            let a = rng.random_range(0.5..3.0);
            let b = rng.random_range(0.1..1.0) * a;
            let phi: f64 = rng.random_range(-1.5..1.5);
            let (cx, cy) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (cphi, sphi) = (phi.cos(), phi.sin());
            // Conic from geometric parameters.
            let inv_a2 = 1.0 / (a * a);
            let inv_b2 = 1.0 / (b * b);
            let g1 = cphi * cphi * inv_a2 + sphi * sphi * inv_b2;
            let g2 = 2.0 * cphi * sphi * (inv_a2 - inv_b2);
            let g3 = sphi * sphi * inv_a2 + cphi * cphi * inv_b2;
            let g4 = -2.0 * g1 * cx - g2 * cy;
            let g5 = -g2 * cx - 2.0 * g3 * cy;
            let g6 = g1 * cx * cx + g2 * cx * cy + g3 * cy * cy - 1.0;
            let g = ConicVector([g1, g2, g3, g4, g5, g6]);
            let frame = elliptical_frame(&g).unwrap();
            let scale = a * a;
            let gnorm = g.as_vec6().norm();
            for k in 0..100 {
                let t = k as f64 / 100.0 * std::f64::consts::TAU;
                let p = frame.curve_point(t);
                let z = g.algebraic_value(p).abs();
                assert!(
                    z < 1e-8 * gnorm * scale,
                    "frame roundtrip residual {z:.3e} at t={t}"
                );
            }
        }
    }

    #[test]
    fn frame_roundtrip_hyperbola() {
        // x²/4 − y²/9 = 1.
        let g = ConicVector([0.25, 0.0, -1.0 / 9.0, 0.0, 0.0, -1.0]);
        let frame = elliptical_frame(&g).unwrap();
        assert_eq!(frame.class, ConicClass::Hyperbola);
        assert_relative_eq!(frame.focal.0.abs(), (4.0f64 + 9.0).sqrt(), epsilon = 1e-12);
        for k in -20..=20 {
            let eta = k as f64 * 0.1;
            let p = frame.curve_point(eta);
            assert!(g.algebraic_value(p).abs() < 1e-10);
        }
    }

    #[test]
    fn nearest_point_radial_on_circle() {
        let frame = elliptical_frame(&unit_circle()).unwrap();
        let proj = frame.nearest_point(Point2::new(2.0, 0.0)).unwrap();
        assert_relative_eq!(proj.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(proj.y, 0.0, epsilon = 1e-12);
        assert!(matches!(
            frame.nearest_point(Point2::new(0.0, 0.0)),
            Err(Error::AmbiguousProjection)
        ));
    }

    #[test]
    fn nearest_point_minor_axis() {
        // x²/4 + y² = 1; the point (0, 2) projects to (0, 1).
        let g = ConicVector([0.25, 0.0, 1.0, 0.0, 0.0, -1.0]);
        let frame = elliptical_frame(&g).unwrap();
        let proj = frame.nearest_point(Point2::new(0.0, 2.0)).unwrap();
        assert_relative_eq!(proj.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(proj.y, 1.0, epsilon = 1e-12);
    }

    /// Dense-search oracle: the coordinate projection lands on the curve and
    /// is within 10% excess distance of the true Euclidean nearest point.
    #[test]
    fn nearest_point_close_to_euclidean() {
        let g = ConicVector([1.0, 0.0, 1.0 / (0.4 * 0.4), 0.0, 0.0, -1.0]); // a=1, b=0.4
        let frame = elliptical_frame(&g).unwrap();
        let gnorm = g.as_vec6().norm();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..200 {
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let on_curve = frame.curve_point(t);
            let dn = rng.random_range(-0.05..0.05);
            let p = Point2::new(on_curve.x + dn, on_curve.y + dn * 0.5);
            let proj = frame.nearest_point(p).unwrap();
            assert!(g.algebraic_value(proj).abs() < 1e-10 * gnorm);

            // Dense parameter search for the true nearest point.
            let mut best = f64::INFINITY;
            for k in 0..20000 {
                let tt = k as f64 / 20000.0 * std::f64::consts::TAU;
                let q = frame.curve_point(tt);
                best = best.min(p.distance(q));
            }
            let got = p.distance(proj);
            assert!(
                got <= best * 1.1 + 1e-12,
                "projection distance {got:.6e} vs best {best:.6e}"
            );
        }
    }

    #[test]
    fn nearest_point_hyperbola_branches() {
        // x² − y² = 1; points near each branch project onto that branch.
        let g = ConicVector([1.0, 0.0, -1.0, 0.0, 0.0, -1.0]);
        let frame = elliptical_frame(&g).unwrap();
        let right = frame.nearest_point(Point2::new(1.5, 0.1)).unwrap();
        assert!(right.x > 0.0);
        assert!(g.algebraic_value(right).abs() < 1e-10);
        let left = frame.nearest_point(Point2::new(-1.5, -0.1)).unwrap();
        assert!(left.x < 0.0);
        assert!(g.algebraic_value(left).abs() < 1e-10);
    }

    #[test]
    fn nearest_point_idempotent() {
        let g = ConicVector([1.0, 0.3, 2.0, 0.1, -0.2, -1.0]);
        let frame = elliptical_frame(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let p = Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            if p.distance(frame.center) < 1e-6 {
                continue;
            }
            let once = frame.nearest_point(p).unwrap();
            let twice = frame.nearest_point(once).unwrap();
            assert!(once.distance(twice) < 1e-10);
        }
    }

    #[test]
    fn optimal_weights_constant_on_circle() {
        let g = unit_circle();
        let frame = elliptical_frame(&g).unwrap();
        let n = 12;
        let pts: Vec<Point2> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                Point2::new(t.cos(), t.sin())
            })
            .collect();
        let w = optimal_weights(&pts, &g, &frame).unwrap();
        let expected = 1.0 / (n as f64 * 4.0);
        for &wi in &w {
            assert_relative_eq!(wi, expected, epsilon = 1e-12);
        }
    }

    /// Closed-form gradient oracle on an eccentric ellipse: the weight ratio
    /// between the flat side and the tip matches |∇Z|⁻².
    #[test]
    fn optimal_weights_eccentric_ratio() {
        let (a, b) = (1.0, 0.1);
        let g = ConicVector([1.0 / (a * a), 0.0, 1.0 / (b * b), 0.0, 0.0, -1.0]);
        let frame = elliptical_frame(&g).unwrap();
        let tip = Point2::new(a, 0.0);
        let flat = Point2::new(0.0, b);
        let w = optimal_weights(&[tip, flat], &g, &frame).unwrap();
        let grad_tip = {
            let (zx, zy) = g.gradient_at(tip);
            zx * zx + zy * zy
        };
        let grad_flat = {
            let (zx, zy) = g.gradient_at(flat);
            zx * zx + zy * zy
        };
        assert_relative_eq!(w[0] / w[1], grad_flat / grad_tip, epsilon = 1e-10);
    }

    #[test]
    fn weights_scale_with_inverse_square_of_g() {
        let g = ConicVector([1.0, 0.1, 1.3, 0.0, 0.0, -1.0]);
        let frame = elliptical_frame(&g).unwrap();
        let pts: Vec<Point2> = (0..8).map(|i| frame.curve_point(i as f64 * 0.7)).collect();
        let w1 = optimal_weights(&pts, &g, &frame).unwrap();
        let g_scaled = g.scale(3.0);
        let frame_scaled = elliptical_frame(&g_scaled).unwrap();
        let w2 = optimal_weights(&pts, &g_scaled, &frame_scaled).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            assert_relative_eq!(*a / *b, 9.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn sampson_equals_optimal_on_curve() {
        let g = ConicVector([1.0, 0.2, 1.4, -0.1, 0.05, -1.0]);
        let frame = elliptical_frame(&g).unwrap();
        let pts: Vec<Point2> = (0..10).map(|i| frame.curve_point(i as f64 * 0.6)).collect();
        let wo = optimal_weights(&pts, &g, &frame).unwrap();
        let ws = sampson_weights(&pts, &g).unwrap();
        for (a, b) in wo.iter().zip(&ws) {
            assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-9);
        }
    }

    #[test]
    fn sampson_weight_off_curve_circle() {
        // Noisy point at radius 1+δ on the unit circle: weight differs from
        // the on-curve value by (1+δ)⁻².
        let g = unit_circle();
        let delta = 0.05;
        let pts = vec![Point2::new(1.0 + delta, 0.0), Point2::new(0.0, 1.0)];
        let w = sampson_weights(&pts, &g).unwrap();
        let expected0 = 1.0 / (2.0 * 4.0 * (1.0 + delta) * (1.0 + delta));
        assert_relative_eq!(w[0], expected0, epsilon = 1e-12);
    }

    /// Rotating and translating the inputs rotates and translates the fitted
    /// curve: the geometric parameters must match.
    #[test]
    fn euclidean_invariance_of_fit() {
        use crate::pipeline::{generic_fit, Weighting};
        let mut pts: Vec<Point2> = (0..24)
            .map(|i| {
                let t = i as f64 / 24.0 * 4.5;
                Point2::new(1.3 * t.cos(), 0.5 * t.sin())
            })
            .collect();
        // Deterministic jitter so the data are not exact.
        for (i, p) in pts.iter_mut().enumerate() {
            p.x += 1e-3 * (((i * 13 + 5) % 9) as f64 - 4.0);
            p.y += 1e-3 * (((i * 7 + 2) % 11) as f64 - 5.0);
        }
        let (phi, tx, ty) = (0.83f64, -0.4, 1.7);
        let (c, s) = (phi.cos(), phi.sin());
        let moved: Vec<Point2> = pts
            .iter()
            .map(|p| Point2::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty))
            .collect();

        let fit_a = generic_fit(&pts, Weighting::Unweighted).unwrap();
        let fit_b = generic_fit(&moved, Weighting::Unweighted).unwrap();
        let frame_a = elliptical_frame(&fit_a.g0).unwrap();
        let frame_b = elliptical_frame(&fit_b.g0).unwrap();

        let expected_center = Point2::new(
            c * frame_a.center.x - s * frame_a.center.y + tx,
            s * frame_a.center.x + c * frame_a.center.y + ty,
        );
        assert!(frame_b.center.distance(expected_center) < 1e-8);
        assert_relative_eq!(frame_a.semi_axes.0, frame_b.semi_axes.0, epsilon = 1e-8);
        assert_relative_eq!(frame_a.semi_axes.1, frame_b.semi_axes.1, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn classify_respects_scaling(s in 0.1f64..10.0) {
            let g = ConicVector([1.0, 0.3, 1.2, -0.4, 0.2, -1.0]);
            prop_assert_eq!(
                g.classify(DEFAULT_CLASSIFY_TOL),
                g.scale(s).classify(DEFAULT_CLASSIFY_TOL)
            );
        }

        #[test]
        fn canonical_sign_idempotent(
            g1 in -2.0f64..2.0,
            g2 in -2.0f64..2.0,
            g3 in -2.0f64..2.0,
            g6 in -2.0f64..2.0,
        ) {
            prop_assume!(g1.abs() + g2.abs() + g3.abs() + g6.abs() > 0.1);
            let g = ConicVector([g1, g2, g3, 0.1, -0.7, g6]);
            let once = g.canonical_sign();
            let twice = once.canonical_sign();
            prop_assert_eq!(once, twice);
            // G and −G map to the same canonical vector.
            prop_assert_eq!(g.scale(-1.0).canonical_sign(), once);
        }
    }
}
