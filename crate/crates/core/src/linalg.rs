//! Dense symmetric linear algebra for small matrices.
//!
//! Everything here targets the tiny systems of this crate (dimension ≤ 6):
//! a cyclic Jacobi eigensolver, Cholesky factorization, triangular solves
//! and a spectral pseudoinverse. Jacobi is unconditionally stable for
//! symmetric input and delivers high relative accuracy for the small
//! eigenvalues we care about.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Result of a symmetric eigendecomposition, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues, ascending.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, ordered to match `values`.
    pub vectors: DMatrix<f64>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Panics if the matrix is not square; symmetry is assumed and only the
/// upper triangle is read when forming rotations.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> SymEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigen requires a square matrix");

    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    if n <= 1 {
        return SymEigen {
            values: (0..n).map(|i| m[(i, i)]).collect(),
            vectors: v,
        };
    }

    let scale: f64 = m
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    const MAX_SWEEPS: usize = 50;

    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    s += m[(p, q)] * m[(p, q)];
                }
            }
            s.sqrt()
        };
        if off <= 1e-15 * scale {
            break;
        }

        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = 0.5 * (m[(q, q)] - m[(p, p)]) / apq;
                let t = if theta.abs() > 1e150 {
                    // Rotation angle underflows; tan ≈ 1/(2θ).
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let app = m[(p, p)];
                let aqq = m[(q, q)];
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;

                for k in 0..n {
                    if k != p && k != q {
                        let akp = m[(k, p)];
                        let akq = m[(k, q)];
                        m[(k, p)] = akp - s * (akq + tau * akp);
                        m[(p, k)] = m[(k, p)];
                        m[(k, q)] = akq + s * (akp - tau * akq);
                        m[(q, k)] = m[(k, q)];
                    }
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp - s * (vkq + tau * vkp);
                    v[(k, q)] = vkq + s * (vkp - tau * vkq);
                }
            }
        }
    }

    // Sort ascending, carrying eigenvectors along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    SymEigen { values, vectors }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Fails with `InvalidNormalizationMatrix` when a pivot falls below
/// `1e-12` of the trace-per-dimension scale.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let scale = (a.trace() / n.max(1) as f64).abs();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 1e-12 * scale) {
            return Err(Error::InvalidNormalizationMatrix);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves L x = b for lower-triangular L.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = x[k];
            x[i] -= l[(i, k)] * v;
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Solves Lᵀ x = b for lower-triangular L.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = x[k];
            x[i] -= l[(k, i)] * v;
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Computes L⁻¹ A for lower-triangular L, column by column.
pub fn solve_lower_matrix(l: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        let col = DVector::from_column_slice(a.column(j).as_slice());
        out.set_column(j, &solve_lower(l, &col));
    }
    out
}

/// Spectral inverse of a symmetric positive definite matrix.
///
/// Fails with `DegenerateReduction` when the condition number exceeds 1e12.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = jacobi_eigen(a);
    let max = eig.values.last().copied().unwrap_or(0.0);
    let min = eig.values.first().copied().unwrap_or(0.0);
    if !(min > 0.0) || max / min > 1e12 {
        return Err(Error::DegenerateReduction);
    }
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (k, &lam) in eig.values.iter().enumerate() {
        let u = eig.vectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += u[i] * u[j] / lam;
            }
        }
    }
    Ok(out)
}

/// Moore-Penrose pseudoinverse of a symmetric matrix by spectral
/// decomposition, dropping eigenvalues below `rel_tol` of the largest
/// magnitude.
pub fn sym_pseudoinverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let eig = jacobi_eigen(a);
    let max_abs = eig.values.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (k, &lam) in eig.values.iter().enumerate() {
        if lam.abs() <= rel_tol * max_abs {
            continue;
        }
        let u = eig.vectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += u[i] * u[j] / lam;
            }
        }
    }
    out
}

/// Pairwise (cascade) sum of the matrices yielded by `term` over `0..n`.
///
/// The reduction tree depends only on `n`, so the result is bit-stable for
/// a fixed sequence of terms.
pub fn pairwise_matrix_sum<F>(n: usize, rows: usize, cols: usize, term: &F) -> DMatrix<f64>
where
    F: Fn(usize) -> DMatrix<f64>,
{
    fn go<F: Fn(usize) -> DMatrix<f64>>(lo: usize, hi: usize, term: &F) -> DMatrix<f64> {
        if hi - lo == 1 {
            term(lo)
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    if n == 0 {
        DMatrix::zeros(rows, cols)
    } else {
        go(0, n, term)
    }
}

/// Pairwise sum of scalars yielded by `term` over `0..n`.
pub fn pairwise_sum<F>(n: usize, term: &F) -> f64
where
    F: Fn(usize) -> f64,
{
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        if hi - lo == 1 {
            term(lo)
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    if n == 0 {
        0.0
    } else {
        go(0, n, term)
    }
}
