use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not diagonal (off-diagonal magnitude {offdiag:.3e})")]
    NotDiagonal { offdiag: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("argument {arg} outside the domain: {what}")]
    Domain { arg: Complex64, what: &'static str },

    #[error("argument lies in neither the upper nor the lower half-plane (margins {upper:.3e}, {lower:.3e})")]
    NeitherHalfPlane { upper: f64, lower: f64 },

    #[error("half-plane violation at iteration {iteration}: margin {margin:.3e}")]
    HalfPlaneViolation { iteration: usize, margin: f64 },

    #[error("[B^-1]_kk vanishes at k = {k}")]
    DegeneratePoint { k: usize },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalue computation failed")]
    Eigen,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self.root(), Error::NonConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
