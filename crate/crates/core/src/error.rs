//! Error type shared by all fitting stages.

/// Errors produced by the fitting machinery.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// No data points were supplied.
    #[error("no data")]
    NoData,
    /// A statistical weight was zero, negative or non-finite.
    #[error("invalid weight at index {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },
    /// A coordinate or matrix entry was NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    /// Operand dimensions do not match.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// The lower-right scatter block is numerically singular, so the
    /// Schur reduction cannot proceed.
    #[error("degenerate data for reduction")]
    DegenerateReduction,
    /// The normalization matrix is not positive definite.
    #[error("invalid normalization matrix")]
    InvalidNormalizationMatrix,
    /// The two smallest eigenvalues coincide; the data do not determine
    /// a unique fit direction.
    #[error("degenerate fit direction")]
    DegenerateFitDirection,
    /// The gradient outer-product constraint has rank below its nominal value.
    #[error("degenerate point configuration")]
    DegeneratePointConfiguration,
    /// Fewer points than model coefficients.
    #[error("underdetermined: need at least {needed} points, got {got}")]
    Underdetermined { needed: usize, got: usize },
    /// The coefficient vector describes a degenerate conic (line pair or point).
    #[error("degenerate conic")]
    DegenerateConic,
    /// The conic has no elliptical coordinate frame (parabola or degenerate).
    #[error("no elliptical frame")]
    NoEllipticalFrame,
    /// The point projects ambiguously (it coincides with the center).
    #[error("ambiguous projection")]
    AmbiguousProjection,
    /// The variance of the algebraic distance is not positive at this point.
    #[error("degenerate variance direction")]
    DegenerateVarianceDirection,
    /// The quadratic-form denominator of the constraint projection vanished.
    #[error("projection direction undefined")]
    ProjectionDirectionUndefined,
    /// The constraint projection did not converge.
    #[error("projection did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    /// A derived parameter has no finite derivatives at this coefficient vector.
    #[error("parameter singular here")]
    ParameterSingular,
}

pub type Result<T> = std::result::Result<T, Error>;
