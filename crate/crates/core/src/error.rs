use alloc::boxed::Box;
use alloc::string::String;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),
    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// `N HᵀΣ⁻¹H + Σ_θ⁻¹` could not be factorized (only possible with a flat prior).
    #[error("normal-equations matrix is singular (rank-deficient observation matrix with flat prior)")]
    SingularNormalMatrix,
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("grid point {axis_value}: {source}")]
    GridPoint { axis_value: f64, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
