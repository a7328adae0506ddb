use thiserror::Error;

/// Broad classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller supplied something malformed or outside an operation's domain.
    Input,
    /// The numerics could not certify a result at the configured tolerance.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not skew-symmetric (defect {defect:.3e})")]
    NotSkew { defect: f64 },

    #[error("conjugator is not orthogonal (defect {defect:.3e})")]
    NotOrthogonal { defect: f64 },

    #[error("map is not an involution (residual {residual:.3e})")]
    NotInvolutive { residual: f64 },

    #[error("involution does not preserve the given subspace (leak {leak:.3e})")]
    SubspaceNotInvariant { leak: f64 },

    #[error("Killing form is degenerate: the algebra is not semisimple")]
    DegenerateKillingForm,

    #[error("could not certify a maximal abelian subspace after {iterations} iterations")]
    MaximalityNotCertified { iterations: usize },

    #[error("eigenvalue clusters are not separable: gap {gap:.3e} against tolerance {tol:.3e}")]
    ClusterSeparation { gap: f64, tol: f64 },

    #[error("restricted root data inconsistent: {0}")]
    RootData(String),

    #[error("operation requires commuting involutions")]
    NotCommuting,

    #[error("point is singular: {0}")]
    SingularPoint(String),

    #[error("segment crosses a chamber wall of root {beta}")]
    ChamberCrossing { beta: usize },

    #[error("focal point: block {block} of root {beta} has sin(t - beta(w)) = 0")]
    FocalPoint { beta: usize, block: usize },

    #[error("finite differences unstable: {0}")]
    FiniteDifference(String),

    #[error("no period found for axis {axis} below {bound}")]
    PeriodNotFound { axis: usize, bound: f64 },

    #[error("function is not H-invariant: f(x) = {fx}, f(h.x) = {fhx}")]
    NotInvariant { fx: f64, fhx: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerically degenerate: {0}")]
    Degenerate(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DimensionMismatch { .. }
            | Error::NotSkew { .. }
            | Error::NotOrthogonal { .. }
            | Error::NotInvolutive { .. }
            | Error::SubspaceNotInvariant { .. }
            | Error::DegenerateKillingForm
            | Error::NotCommuting
            | Error::SingularPoint(_)
            | Error::ChamberCrossing { .. }
            | Error::FocalPoint { .. }
            | Error::NotInvariant { .. }
            | Error::InvalidInput(_) => ErrorKind::Input,
            Error::MaximalityNotCertified { .. }
            | Error::ClusterSeparation { .. }
            | Error::RootData(_)
            | Error::FiniteDifference(_)
            | Error::PeriodNotFound { .. }
            | Error::Degenerate(_) => ErrorKind::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
