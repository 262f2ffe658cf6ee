//! Generic homogeneous linear model machinery.
//!
//! A model Z(x) = Gᵀ D(x) = 0 with M coefficients is fitted to weighted data
//! by minimizing Gᵀ S G subject to a normalization Gᵀ C G = 1, where S is the
//! weighted scatter matrix of the design vectors and C is a rank-R constraint
//! whose nonzero block sits in the upper-left corner. The minimizer is the
//! smallest eigenpair of the generalized problem S G = λ C G, solved here by
//! Schur-reducing away the unconstrained block, whitening with the Cholesky
//! factor of the constraint and running a cyclic Jacobi sweep.
//!
//! Nothing in this module knows about conics; dimensions M and R are runtime
//! values (the conic layer instantiates M = 6, R = 5).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

// ── Domain types ────────────────────────────────────────────────────────────

/// Design vector D(x): the monomial values of one data point.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector(DVector<f64>);

impl DesignVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("design vector component"));
        }
        Ok(Self(DVector::from_vec(components)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dot(&self, other: &DVector<f64>) -> f64 {
        self.0.dot(other)
    }
}

/// Model coefficient vector G.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector(DVector<f64>);

impl ModelVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let v = DVector::from_vec(components);
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("model vector component"));
        }
        if v.norm() == 0.0 {
            return Err(Error::NonFinite("model vector must be nonzero"));
        }
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    /// Canonical sign: the first component of largest magnitude is made
    /// positive (ties broken by lowest index), so that G and −G — the same
    /// model — compare and average consistently.
    pub fn canonical_sign(mut self) -> Self {
        let mut best = 0;
        for i in 1..self.0.len() {
            if self.0[i].abs() > self.0[best].abs() {
                best = i;
            }
        }
        if self.0[best] < 0.0 {
            self.0.neg_mut();
        }
        self
    }

    /// Rescales so that Gᵀ C G = 1.
    pub fn normalize_against(mut self, c: &ConstraintMatrix) -> Result<Self> {
        let q = (c.matrix() * &self.0).dot(&self.0);
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::InvalidNormalizationMatrix);
        }
        self.0 /= q.sqrt();
        Ok(self)
    }
}

/// Weighted scatter matrix S = Σᵢ wᵢ Dᵢ Dᵢᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMatrix {
    matrix: DMatrix<f64>,
    weights_applied: bool,
}

impl ScatterMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn weights_applied(&self) -> bool {
        self.weights_applied
    }

    /// Wraps an existing symmetric matrix (used for projected scatters).
    pub fn from_matrix(matrix: DMatrix<f64>, weights_applied: bool) -> Self {
        Self {
            matrix,
            weights_applied,
        }
    }
}

/// Normalization constraint C in partitioned form: an R×R positive definite
/// upper-left block and zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    matrix: DMatrix<f64>,
    rank: usize,
}

impl ConstraintMatrix {
    /// Validates the partitioned structure: rows and columns beyond `rank`
    /// must be identically zero and the upper block positive definite.
    pub fn new(matrix: DMatrix<f64>, rank: usize) -> Result<Self> {
        let m = matrix.nrows();
        assert_eq!(m, matrix.ncols(), "constraint matrix must be square");
        assert!(rank <= m);
        for i in 0..m {
            for j in rank..m {
                if matrix[(i, j)] != 0.0 || matrix[(j, i)] != 0.0 {
                    return Err(Error::InvalidNormalizationMatrix);
                }
            }
        }
        let upper = matrix.view((0, 0), (rank, rank)).into_owned();
        let eig = linalg::jacobi_eigen(&upper);
        let trace = upper.trace();
        if eig.values.first().copied().unwrap_or(0.0) <= 1e-12 * trace {
            return Err(Error::InvalidNormalizationMatrix);
        }
        Ok(Self { matrix, rank })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The R×R reduced block C̃.
    pub fn reduced(&self) -> DMatrix<f64> {
        self.matrix
            .view((0, 0), (self.rank, self.rank))
            .into_owned()
    }

    /// Generalized inverse: the inverse of C̃ padded with zeros.
    pub fn pseudo_inverse(&self) -> Result<DMatrix<f64>> {
        let m = self.dim();
        let inv =
            linalg::spd_inverse(&self.reduced()).map_err(|_| Error::InvalidNormalizationMatrix)?;
        let mut out = DMatrix::zeros(m, m);
        out.view_mut((0, 0), (self.rank, self.rank)).copy_from(&inv);
        Ok(out)
    }
}

/// Blocks produced by the Schur reduction of a scatter matrix.
#[derive(Debug, Clone)]
pub struct SchurReduced {
    /// S̃ = S₁₁ − S₁₂ S₂₂⁻¹ S₂₁, the reduced R×R scatter.
    pub reduced: DMatrix<f64>,
    /// S₂₁ block ((M−R)×R).
    pub s21: DMatrix<f64>,
    /// S₂₂⁻¹ block ((M−R)×(M−R)).
    pub s22_inv: DMatrix<f64>,
}

/// Complete solution of the reduced generalized eigenproblem, with full-size
/// eigenvectors reconstructed.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// All R eigenvalues, ascending.
    pub lambdas: Vec<f64>,
    /// Full M-component eigenvectors, C̃-orthonormal in their reduced part.
    pub vectors: Vec<ModelVector>,
    /// S₂₁ block retained for perturbation work.
    pub s21: DMatrix<f64>,
    /// S₂₂⁻¹ block retained for the generalized-inverse corner.
    pub s22_inv: DMatrix<f64>,
}

impl EigenSolution {
    pub fn model_dim(&self) -> usize {
        self.vectors[0].dim()
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }
}

/// Generalized inverse Y₀ of the scatter matrix, excluding the fit direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedInverse {
    matrix: DMatrix<f64>,
}

impl GeneralizedInverse {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

// ── Operations ──────────────────────────────────────────────────────────────

/// Canonical summation order: indices sorted by design components, then
/// weight. With a fixed pairwise reduction tree this makes every aggregate
/// bit-identical under permutation of the input points.
pub(crate) fn canonical_order(designs: &[DesignVector], weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..designs.len()).collect();
    order.sort_by(|&a, &b| {
        let da = designs[a].as_vector().as_slice();
        let db = designs[b].as_vector().as_slice();
        da.partial_cmp(db)
            .unwrap()
            .then(weights[a].partial_cmp(&weights[b]).unwrap())
    });
    order
}

/// Builds the weighted scatter matrix S = Σᵢ wᵢ Dᵢ Dᵢᵀ.
///
/// The upper triangle is accumulated by pairwise summation in canonical
/// order and mirrored, so the result is exactly symmetric and independent
/// of input permutation.
pub fn build_scatter(designs: &[DesignVector], weights: &[f64]) -> Result<ScatterMatrix> {
    if designs.is_empty() {
        return Err(Error::NoData);
    }
    if designs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: designs.len(),
            got: weights.len(),
        });
    }
    let m = designs[0].dim();
    for d in designs {
        if d.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: d.dim(),
            });
        }
    }
    for (index, &w) in weights.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidWeight { index, value: w });
        }
    }

    let order = canonical_order(designs, weights);
    let upper = linalg::pairwise_matrix_sum(order.len(), m, m, &|k| {
        let i = order[k];
        let d = designs[i].as_vector();
        let w = weights[i];
        let mut t = DMatrix::<f64>::zeros(m, m);
        for r in 0..m {
            for c in r..m {
                t[(r, c)] = w * d[r] * d[c];
            }
        }
        t
    });
    let mut s = upper;
    for r in 0..m {
        for c in 0..r {
            s[(r, c)] = s[(c, r)];
        }
    }
    let unit_weights = weights.iter().all(|&w| w == 1.0);
    Ok(ScatterMatrix {
        matrix: s,
        weights_applied: !unit_weights,
    })
}

/// Schur reduction: eliminates the (M−R)-dimensional unconstrained block.
///
/// Returns S̃ together with the blocks needed to reconstruct full
/// eigenvectors. Fails with `DegenerateReduction` when S₂₂ is singular
/// (condition number above 1e12), which happens only for degenerate data.
pub fn schur_reduce(s: &ScatterMatrix, rank_r: usize) -> Result<SchurReduced> {
    let m = s.dim();
    assert!(rank_r <= m, "constraint rank exceeds model dimension");
    let k = m - rank_r;
    let s11 = s.matrix.view((0, 0), (rank_r, rank_r)).into_owned();
    let s12 = s.matrix.view((0, rank_r), (rank_r, k)).into_owned();
    let s21 = s.matrix.view((rank_r, 0), (k, rank_r)).into_owned();
    let s22 = s.matrix.view((rank_r, rank_r), (k, k)).into_owned();

    let s22_inv = linalg::spd_inverse(&s22)?;
    let mut reduced = s11 - &s12 * &s22_inv * &s21;
    // Restore exact symmetry lost to rounding in the triple product.
    for r in 0..rank_r {
        for c in 0..r {
            let avg = 0.5 * (reduced[(r, c)] + reduced[(c, r)]);
            reduced[(r, c)] = avg;
            reduced[(c, r)] = avg;
        }
    }
    Ok(SchurReduced {
        reduced,
        s21,
        s22_inv,
    })
}

/// Reduced eigenpairs of S̃ G̃ = λ C̃ G̃, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct ReducedEigen {
    pub lambdas: Vec<f64>,
    /// Reduced eigenvectors, C̃-orthonormal.
    pub vectors: Vec<DVector<f64>>,
}

/// Solves the symmetric-definite reduced problem S̃ G̃ = λ C̃ G̃.
///
/// C̃ is factored as J Jᵀ (Cholesky), the standard symmetric problem
/// J⁻¹ S̃ J⁻ᵀ is solved by Jacobi sweeps, and eigenvectors are mapped back
/// through J⁻ᵀ, which makes them C̃-orthonormal by construction.
pub fn solve_reduced_eigen(s_tilde: &DMatrix<f64>, c_tilde: &DMatrix<f64>) -> Result<ReducedEigen> {
    let r = s_tilde.nrows();
    assert_eq!(r, c_tilde.nrows());
    let j = linalg::cholesky_lower(c_tilde)?;
    // T = J⁻¹ S̃ J⁻ᵀ, formed as J⁻¹ (J⁻¹ S̃)ᵀ since S̃ is symmetric.
    let a = linalg::solve_lower_matrix(&j, s_tilde);
    let mut t = linalg::solve_lower_matrix(&j, &a.transpose());
    for i in 0..r {
        for k in 0..i {
            let avg = 0.5 * (t[(i, k)] + t[(k, i)]);
            t[(i, k)] = avg;
            t[(k, i)] = avg;
        }
    }
    let eig = linalg::jacobi_eigen(&t);
    let mut vectors = Vec::with_capacity(r);
    for k in 0..r {
        let u = DVector::from_column_slice(eig.vectors.column(k).as_slice());
        vectors.push(linalg::solve_lower_transpose(&j, &u));
    }
    Ok(ReducedEigen {
        lambdas: eig.values,
        vectors,
    })
}

/// Reconstructs the unconstrained components: H̃ = −S₂₂⁻¹ S₂₁ G̃.
pub fn reconstruct_full(
    g_tilde: &DVector<f64>,
    s21: &DMatrix<f64>,
    s22_inv: &DMatrix<f64>,
) -> Result<ModelVector> {
    if s21.ncols() != g_tilde.len() {
        return Err(Error::DimensionMismatch {
            expected: s21.ncols(),
            got: g_tilde.len(),
        });
    }
    let h = -(s22_inv * (s21 * g_tilde));
    let mut components = Vec::with_capacity(g_tilde.len() + h.len());
    components.extend_from_slice(g_tilde.as_slice());
    components.extend_from_slice(h.as_slice());
    ModelVector::new(components)
}

/// Solves the full partitioned problem: Schur reduction, reduced eigensolve,
/// reconstruction. Convenience wrapper used by the fitting pipeline.
pub fn solve_partitioned(s: &ScatterMatrix, c: &ConstraintMatrix) -> Result<EigenSolution> {
    let rank = c.rank();
    let blocks = schur_reduce(s, rank)?;
    let reduced = solve_reduced_eigen(&blocks.reduced, &c.reduced())?;
    let mut vectors = Vec::with_capacity(rank);
    for g_tilde in &reduced.vectors {
        let full = reconstruct_full(g_tilde, &blocks.s21, &blocks.s22_inv)?;
        vectors.push(full.canonical_sign());
    }
    Ok(EigenSolution {
        lambdas: reduced.lambdas,
        vectors,
        s21: blocks.s21,
        s22_inv: blocks.s22_inv,
    })
}

/// Assembles a generalized inverse from an eigensolution, dropping the
/// `drop` smallest eigenpairs:
///
/// Y = Σ_{m ≥ drop} G_m G_mᵀ / λ_m + diag(0, S₂₂⁻¹).
///
/// The corner block carries the unconstrained directions.
pub fn generalized_inverse_dropping(sol: &EigenSolution, drop: usize) -> GeneralizedInverse {
    let m = sol.model_dim();
    let r = sol.rank();
    let k = m - r;
    let mut y = DMatrix::<f64>::zeros(m, m);
    for idx in drop..r {
        let g = sol.vectors[idx].as_vector();
        let lam = sol.lambdas[idx];
        for a in 0..m {
            for b in 0..m {
                y[(a, b)] += g[a] * g[b] / lam;
            }
        }
    }
    for a in 0..k {
        for b in 0..k {
            y[(r + a, r + b)] += sol.s22_inv[(a, b)];
        }
    }
    GeneralizedInverse { matrix: y }
}

/// The generalized inverse Y₀ excluding the fit direction G₀.
///
/// Fails with `DegenerateFitDirection` when the smallest eigenvalue is
/// repeated (λ₁ − λ₀ below 1e-10 of the spectral range), since the data
/// then underdetermine the fit.
pub fn generalized_inverse_y0(
    sol: &EigenSolution,
    _c: &ConstraintMatrix,
) -> Result<GeneralizedInverse> {
    let r = sol.rank();
    if r >= 2 {
        let top = sol.lambdas[r - 1];
        if sol.lambdas[1] - sol.lambdas[0] < 1e-10 * top.abs() {
            return Err(Error::DegenerateFitDirection);
        }
    }
    Ok(generalized_inverse_dropping(sol, 1))
}

/// How to turn a generalized inverse into a coefficient covariance.
pub enum CovarianceMode<'a> {
    /// Weights are the optimal ones: V₀ = σ² Y₀ / N.
    Optimal,
    /// Arbitrary weights: V₀ = σ² Y₀ [Σᵢ wᵢ² Dᵢ (Σ_μ (D_{i,μ}ᵀG₀)²) Dᵢᵀ] Y₀.
    /// `gradients` holds the per-point design gradients (one vector per
    /// coordinate direction).
    Explicit {
        designs: &'a [DesignVector],
        gradients: &'a [Vec<DesignVector>],
        weights: &'a [f64],
        g0: &'a ModelVector,
    },
}

/// Covariance of the fitted coefficient vector.
pub fn coefficient_covariance(
    y0: &GeneralizedInverse,
    sigma2: f64,
    n: usize,
    mode: CovarianceMode<'_>,
) -> Result<DMatrix<f64>> {
    assert!(sigma2 >= 0.0, "sigma2 must be nonnegative");
    match mode {
        CovarianceMode::Optimal => Ok(y0.matrix() * (sigma2 / n as f64)),
        CovarianceMode::Explicit {
            designs,
            gradients,
            weights,
            g0,
        } => {
            let m = y0.dim();
            if designs.len() != weights.len() || designs.len() != gradients.len() {
                return Err(Error::DimensionMismatch {
                    expected: designs.len(),
                    got: weights.len().min(gradients.len()),
                });
            }
            let order = canonical_order(designs, weights);
            let inner = linalg::pairwise_matrix_sum(order.len(), m, m, &|k| {
                let i = order[k];
                let d = designs[i].as_vector();
                let q: f64 = gradients[i]
                    .iter()
                    .map(|grad| {
                        let z = grad.dot(g0.as_vector());
                        z * z
                    })
                    .sum();
                let w = weights[i];
                let scale = w * w * q;
                let mut t = DMatrix::<f64>::zeros(m, m);
                for r in 0..m {
                    for c in 0..m {
                        t[(r, c)] = scale * d[r] * d[c];
                    }
                }
                t
            });
            Ok(y0.matrix() * inner * y0.matrix() * sigma2)
        }
    }
}

/// Noise-variance estimate: the smallest eigenvalue, clamped at zero.
///
/// Valid when the solution was computed against the gradient-outer-product
/// normalization, for which the expected shift of λ₀ equals σ².
pub fn estimate_sigma2(sol: &EigenSolution) -> f64 {
    sol.lambdas[0].max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(components: &[f64]) -> DesignVector {
        DesignVector::new(components.to_vec()).unwrap()
    }

    #[test]
    fn scatter_single_outer_product() {
        let s = build_scatter(&[dv(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0])], &[1.0]).unwrap();
        let m = s.matrix();
        for r in 0..6 {
            for c in 0..6 {
                let expected = if (r == 0 || r == 5) && (c == 0 || c == 5) {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(m[(r, c)], expected);
            }
        }
    }

    /// Hand-summed oracle: the four unit-circle axis points.
    #[test]
    fn scatter_unit_circle_axis_points() {
        let pts = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
        let designs: Vec<DesignVector> = pts
            .iter()
            .map(|&(x, y): &(f64, f64)| dv(&[x * x, x * y, y * y, x, y, 1.0]))
            .collect();
        let weights = vec![1.0; 4];

        // Direct summation oracle.
        let mut expected = DMatrix::<f64>::zeros(6, 6);
        for d in &designs {
            expected += d.as_vector() * d.as_vector().transpose();
        }

        let s = build_scatter(&designs, &weights).unwrap();
        assert_relative_eq!(s.matrix().clone(), expected, epsilon = 1e-15);
        assert_eq!(s.matrix()[(5, 5)], 4.0);
        assert_eq!(s.matrix()[(0, 0)], 2.0);
        assert_eq!(s.matrix()[(2, 2)], 2.0);
    }

    #[test]
    fn scatter_linear_in_weights() {
        let designs = vec![dv(&[1.0, 2.0, 3.0]), dv(&[-1.0, 0.5, 2.0])];
        let s1 = build_scatter(&designs, &[1.0, 3.0]).unwrap();
        let s2 = build_scatter(&designs, &[2.0, 6.0]).unwrap();
        assert_relative_eq!(s2.matrix().clone(), s1.matrix() * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn scatter_error_paths() {
        assert_eq!(build_scatter(&[], &[]), Err(Error::NoData));
        let d = vec![dv(&[1.0, 2.0])];
        assert!(matches!(
            build_scatter(&d, &[0.0]),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            build_scatter(&d, &[-1.0]),
            Err(Error::InvalidWeight { .. })
        ));
    }

    #[test]
    fn scatter_permutation_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let designs: Vec<DesignVector> = (0..17)
            .map(|_| {
                dv(&[
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        let weights: Vec<f64> = (0..17).map(|_| rng.random_range(0.1..2.0)).collect();
        let s = build_scatter(&designs, &weights).unwrap();

        let mut shuffled: Vec<usize> = (0..17).collect();
        // Deterministic shuffle.
        for i in (1..17).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        let designs_p: Vec<DesignVector> = shuffled.iter().map(|&i| designs[i].clone()).collect();
        let weights_p: Vec<f64> = shuffled.iter().map(|&i| weights[i]).collect();
        let sp = build_scatter(&designs_p, &weights_p).unwrap();
        assert_eq!(s.matrix(), sp.matrix());
    }

    #[test]
    fn schur_block_diagonal_passthrough() {
        let mut m = DMatrix::<f64>::zeros(4, 4);
        m[(0, 0)] = 2.0;
        m[(1, 1)] = 3.0;
        m[(2, 2)] = 1.0;
        m[(3, 3)] = 5.0;
        let s = ScatterMatrix::from_matrix(m.clone(), false);
        let blocks = schur_reduce(&s, 2).unwrap();
        assert_relative_eq!(
            blocks.reduced,
            m.view((0, 0), (2, 2)).into_owned(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn schur_two_by_two() {
        let s =
            ScatterMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]), false);
        let blocks = schur_reduce(&s, 1).unwrap();
        assert_relative_eq!(blocks.reduced[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(blocks.s22_inv[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn schur_rejects_singular_block() {
        let s =
            ScatterMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]), false);
        assert!(matches!(
            schur_reduce(&s, 1),
            Err(Error::DegenerateReduction)
        ));
    }

    #[test]
    fn identity_pencil_eigenvalues_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                b[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let spd = &b * b.transpose() + DMatrix::identity(4, 4);
        let sol = solve_reduced_eigen(&spd, &spd).unwrap();
        for lam in &sol.lambdas {
            assert_relative_eq!(*lam, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn diagonal_pencil() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
        let c = DMatrix::identity(2, 2);
        let sol = solve_reduced_eigen(&s, &c).unwrap();
        assert_relative_eq!(sol.lambdas[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(sol.lambdas[1], 2.0, epsilon = 1e-14);
        assert_relative_eq!(sol.vectors[0][0].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.vectors[1][1].abs(), 1.0, epsilon = 1e-12);
    }

    /// Residual oracle for a random symmetric-definite pencil at R = 5.
    #[test]
    fn random_pencil_residuals_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let mut a = DMatrix::<f64>::zeros(5, 5);
            let mut b = DMatrix::<f64>::zeros(5, 5);
            for i in 0..5 {
                for j in 0..5 {
                    a[(i, j)] = rng.random_range(-1.0..1.0);
                    b[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            let s = &a * a.transpose();
            let c = &b * b.transpose() + DMatrix::identity(5, 5) * 0.1;
            let sol = solve_reduced_eigen(&s, &c).unwrap();
            let s_norm = s.norm();
            for k in 0..5 {
                let g = &sol.vectors[k];
                let resid = (&s * g - &c * g * sol.lambdas[k]).norm();
                assert!(
                    resid < 1e-10 * s_norm,
                    "residual {resid:.3e} too large vs {s_norm:.3e}"
                );
                for l in 0..5 {
                    let ortho = (&c * &sol.vectors[l]).dot(g);
                    let expected = if k == l { 1.0 } else { 0.0 };
                    assert_relative_eq!(ortho, expected, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn solve_rejects_indefinite_constraint() {
        let s = DMatrix::identity(2, 2);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(
            solve_reduced_eigen(&s, &c).unwrap_err(),
            Error::InvalidNormalizationMatrix
        );
    }

    #[test]
    fn reconstruct_zero_coupling() {
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let s21 = DMatrix::zeros(1, 2);
        let s22_inv = DMatrix::identity(1, 1);
        let full = reconstruct_full(&g, &s21, &s22_inv).unwrap();
        assert_eq!(full.as_vector()[2], 0.0);
    }

    #[test]
    fn reconstruct_scalar_case() {
        // S₂₁ = [1], S₂₂ = [2] so S₂₂⁻¹ = [0.5]; G̃ = [1] gives H̃ = −0.5.
        let g = DVector::from_vec(vec![1.0]);
        let s21 = DMatrix::from_row_slice(1, 1, &[1.0]);
        let s22_inv = DMatrix::from_row_slice(1, 1, &[0.5]);
        let full = reconstruct_full(&g, &s21, &s22_inv).unwrap();
        assert_relative_eq!(full.as_vector()[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn y0_diagonal_full_rank_case() {
        // M = R = 3, C = I, S = diag(0, a, b): Y₀ = diag(0, 1/a, 1/b).
        let (a, b) = (2.0, 5.0);
        let s = ScatterMatrix::from_matrix(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, a, b])),
            false,
        );
        let c = ConstraintMatrix::new(DMatrix::identity(3, 3), 3).unwrap();
        let sol = solve_partitioned(&s, &c).unwrap();
        let y0 = generalized_inverse_y0(&sol, &c).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0 / a, 1.0 / b]));
        assert_relative_eq!(y0.matrix().clone(), expected, epsilon = 1e-12);
    }

    #[test]
    fn y0_annihilates_fit_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                a[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let s =
            ScatterMatrix::from_matrix(&a * a.transpose() + DMatrix::identity(4, 4) * 0.01, true);
        let mut c = DMatrix::<f64>::zeros(4, 4);
        c.view_mut((0, 0), (3, 3))
            .copy_from(&DMatrix::identity(3, 3));
        let c = ConstraintMatrix::new(c, 3).unwrap();
        let sol = solve_partitioned(&s, &c).unwrap();
        let y0 = generalized_inverse_y0(&sol, &c).unwrap();
        let g0 = sol.vectors[0].as_vector();
        let residual = (y0.matrix() * (c.matrix() * g0)).norm();
        assert!(residual < 1e-10 * y0.matrix().norm());
        // Y₀ C G_m = G_m / λ_m for the other modes.
        for m in 1..3 {
            let gm = sol.vectors[m].as_vector();
            let lhs = y0.matrix() * (c.matrix() * gm);
            let rhs = gm / sol.lambdas[m];
            assert_relative_eq!(lhs, rhs, epsilon = 1e-8 * rhs.norm());
        }
    }

    #[test]
    fn degenerate_gap_detected() {
        let s = ScatterMatrix::from_matrix(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 5.0])),
            false,
        );
        let c = ConstraintMatrix::new(DMatrix::identity(3, 3), 3).unwrap();
        let sol = solve_partitioned(&s, &c).unwrap();
        assert_eq!(
            generalized_inverse_y0(&sol, &c).unwrap_err(),
            Error::DegenerateFitDirection
        );
    }

    #[test]
    fn covariance_zero_sigma() {
        let y = GeneralizedInverse {
            matrix: DMatrix::identity(3, 3),
        };
        let v = coefficient_covariance(&y, 0.0, 10, CovarianceMode::Optimal).unwrap();
        assert_eq!(v, DMatrix::zeros(3, 3));
    }

    #[test]
    fn sigma2_clamped_nonnegative() {
        let sol = EigenSolution {
            lambdas: vec![-1e-18, 1.0],
            vectors: vec![
                ModelVector::new(vec![1.0, 0.0]).unwrap(),
                ModelVector::new(vec![0.0, 1.0]).unwrap(),
            ],
            s21: DMatrix::zeros(0, 2),
            s22_inv: DMatrix::zeros(0, 0),
        };
        assert_eq!(estimate_sigma2(&sol), 0.0);
    }

    /// Exact-data oracle: twenty unit-circle points make the reduced
    /// scatter singular (the circle direction is an exact null vector).
    #[test]
    fn exact_circle_reduced_scatter_singular() {
        let designs: Vec<DesignVector> = (0..20)
            .map(|i| {
                let t = i as f64 / 20.0 * std::f64::consts::TAU;
                let (x, y) = (t.cos(), t.sin());
                dv(&[x * x, x * y, y * y, x, y, 1.0])
            })
            .collect();
        let s = build_scatter(&designs, &vec![1.0; 20]).unwrap();
        let blocks = schur_reduce(&s, 5).unwrap();
        let eig = linalg::jacobi_eigen(&blocks.reduced);
        let trace = blocks.reduced.trace();
        assert!(
            eig.values[0].abs() < 1e-10 * trace,
            "smallest reduced eigenvalue {:.3e} vs trace {trace:.3e}",
            eig.values[0]
        );
    }

    fn conic_designs(n: usize, a: f64, b: f64, jitter: f64) -> Vec<DesignVector> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                let r = 1.0 + jitter * ((i * 37 % 11) as f64 - 5.0) / 5.0;
                let (x, y) = (a * t.cos() * r, b * t.sin() * r);
                dv(&[x * x, x * y, y * y, x, y, 1.0])
            })
            .collect()
    }

    fn conic_constraint(n: usize, a: f64, b: f64, jitter: f64) -> ConstraintMatrix {
        // Gradient outer products of the same points.
        let mut c = DMatrix::<f64>::zeros(6, 6);
        for i in 0..n {
            let t = i as f64 / n as f64 * std::f64::consts::TAU;
            let r = 1.0 + jitter * ((i * 37 % 11) as f64 - 5.0) / 5.0;
            let (x, y) = (a * t.cos() * r, b * t.sin() * r);
            let gx = DVector::from_vec(vec![2.0 * x, y, 0.0, 1.0, 0.0, 0.0]);
            let gy = DVector::from_vec(vec![0.0, x, 2.0 * y, 0.0, 1.0, 0.0]);
            c += &gx * gx.transpose() + &gy * gy.transpose();
        }
        ConstraintMatrix::new(c, 5).unwrap()
    }

    /// Full-problem residual oracle for the reconstructed eigenvectors.
    #[test]
    fn reconstructed_vectors_solve_full_problem() {
        let designs = conic_designs(24, 1.0, 0.4, 0.02);
        let s = build_scatter(&designs, &vec![1.0; 24]).unwrap();
        let c = conic_constraint(24, 1.0, 0.4, 0.02);
        let sol = solve_partitioned(&s, &c).unwrap();
        let s_norm = s.matrix().norm();
        for m in 0..5 {
            let g = sol.vectors[m].as_vector();
            let resid = (s.matrix() * g - c.matrix() * g * sol.lambdas[m]).norm();
            assert!(resid < 1e-8 * s_norm, "mode {m}: residual {resid:.3e}");
        }
    }

    /// Pseudoinverse factorization oracle: on noise-free data the
    /// generalized inverse equals J⁻ᵀ (J⁻¹ S̃ J⁻ᵀ)⁺ J⁻¹ on the reduced block.
    #[test]
    fn y0_matches_pseudoinverse_factorization() {
        let designs = conic_designs(24, 1.0, 0.4, 0.0);
        let s = build_scatter(&designs, &vec![1.0; 24]).unwrap();
        let c = conic_constraint(24, 1.0, 0.4, 0.0);
        let sol = solve_partitioned(&s, &c).unwrap();
        let y0 = generalized_inverse_y0(&sol, &c).unwrap();

        let blocks = schur_reduce(&s, 5).unwrap();
        let j = linalg::cholesky_lower(&c.reduced()).unwrap();
        let t = linalg::solve_lower_matrix(
            &j,
            &linalg::solve_lower_matrix(&j, &blocks.reduced).transpose(),
        );
        let t_pinv = linalg::sym_pseudoinverse(&t, 1e-10);
        // J⁻ᵀ T⁺ J⁻¹ column by column: solve Jᵀ X = T⁺ J⁻¹.
        let mut jt_inv = DMatrix::<f64>::zeros(5, 5);
        for col in 0..5 {
            let e = DVector::from_fn(5, |r, _| if r == col { 1.0 } else { 0.0 });
            jt_inv.set_column(col, &linalg::solve_lower(&j, &e));
        }
        let expected = jt_inv.transpose() * t_pinv * jt_inv;
        let actual = y0.matrix().view((0, 0), (5, 5)).into_owned();
        assert_relative_eq!(actual, expected, epsilon = 1e-8 * expected.norm());
    }

    /// First-order perturbation oracle: an explicit small scatter change
    /// moves the fit direction by −Y₀ ΔS G₀.
    #[test]
    fn perturbation_matches_generalized_inverse() {
        let designs = conic_designs(30, 1.0, 0.5, 0.05);
        let s = build_scatter(&designs, &vec![1.0; 30]).unwrap();
        let c = conic_constraint(30, 1.0, 0.5, 0.05);
        let sol = solve_partitioned(&s, &c).unwrap();
        let y0 = generalized_inverse_y0(&sol, &c).unwrap();
        let g0 = sol.vectors[0].as_vector().clone();

        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut delta = DMatrix::<f64>::zeros(6, 6);
        for i in 0..6 {
            for j in i..6 {
                let v = rng.random_range(-1.0..1.0);
                delta[(i, j)] = v;
                delta[(j, i)] = v;
            }
        }
        delta *= 1e-6 * s.matrix().norm() / delta.norm();

        let s_pert = ScatterMatrix::from_matrix(s.matrix() + &delta, false);
        let sol_pert = solve_partitioned(&s_pert, &c).unwrap();
        let mut g_pert = sol_pert.vectors[0].as_vector().clone();
        if g_pert.dot(&g0) < 0.0 {
            g_pert.neg_mut();
        }
        let observed = g_pert - &g0;
        let predicted = -(y0.matrix() * (&delta * &g0));
        let rel = (&observed - &predicted).norm() / predicted.norm();
        assert!(rel < 0.01, "perturbation mismatch {rel:.4}");
    }

    /// Joint homogeneity: doubling the weights and rebuilding the constraint
    /// from them leaves the spectrum untouched; holding the constraint fixed
    /// scales the eigenvalues instead.
    #[test]
    fn weight_scaling_invariance() {
        let designs = conic_designs(24, 1.0, 0.6, 0.03);
        let w1 = vec![1.0; 24];
        let w2 = vec![2.0; 24];
        let s1 = build_scatter(&designs, &w1).unwrap();
        let s2 = build_scatter(&designs, &w2).unwrap();
        let c1 = conic_constraint(24, 1.0, 0.6, 0.03);
        let c2 = ConstraintMatrix::new(c1.matrix() * 2.0, 5).unwrap();

        let sol_11 = solve_partitioned(&s1, &c1).unwrap();
        let sol_22 = solve_partitioned(&s2, &c2).unwrap();
        for m in 0..5 {
            assert_relative_eq!(sol_11.lambdas[m], sol_22.lambdas[m], epsilon = 1e-10);
        }
        assert_relative_eq!(
            estimate_sigma2(&sol_11),
            estimate_sigma2(&sol_22),
            epsilon = 1e-12
        );

        // Fixed constraint: eigenvalues scale by the weight factor, vectors
        // (canonical sign) do not move.
        let sol_21 = solve_partitioned(&s2, &c1).unwrap();
        for m in 0..5 {
            assert_relative_eq!(sol_21.lambdas[m], 2.0 * sol_11.lambdas[m], epsilon = 1e-10);
            let a = sol_11.vectors[m].as_vector();
            let b = sol_21.vectors[m].as_vector();
            assert!((a - b).norm() < 1e-10 * a.norm().max(1.0));
        }
    }

    #[test]
    fn canonical_sign_rule() {
        let v = ModelVector::new(vec![0.5, -2.0, 1.0])
            .unwrap()
            .canonical_sign();
        assert_eq!(v.as_vector().as_slice(), &[-0.5, 2.0, -1.0]);
        // Tie-break: lowest index wins.
        let v = ModelVector::new(vec![-1.0, 1.0]).unwrap().canonical_sign();
        assert_eq!(v.as_vector().as_slice(), &[1.0, -1.0]);
    }
}
