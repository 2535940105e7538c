use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("imaginary residual {residual:.3e} exceeds {limit:.1e} relative to the real part")]
    ImaginaryResidual { residual: f64, limit: f64 },

    #[error("solver aborted at step {step}: {reason}")]
    Aborted { step: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(step: usize, source: Error) -> Self {
        match source {
            e @ Error::Aborted { .. } => e,
            other => Error::Aborted {
                step,
                reason: other.to_string(),
            },
        }
    }
}
