use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("series too short: need at least {needed} samples, got {actual}")]
    SeriesTooShort { needed: usize, actual: usize },

    #[error("integrator produced a non-finite state")]
    NonFiniteState,

    #[error("ill-posed least-squares fit: {0}")]
    IllPosedFit(String),

    #[error("feature map is not differentiable at a sampled point")]
    NotDifferentiable,

    #[error("numerically singular cocycle at step {step}")]
    SingularCocycle { step: usize },

    #[error("rank-deficient embedding derivative")]
    RankDeficient,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Whether the failure came from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteState
                | Error::IllPosedFit(_)
                | Error::NotDifferentiable
                | Error::SingularCocycle { .. }
                | Error::RankDeficient
        )
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
