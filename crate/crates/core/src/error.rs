use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network has no nodes or no surviving edges")]
    EmptyNetwork,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("format error at line {line}: {reason}")]
    Format { line: usize, reason: String },

    #[error("matrix with zero spectral radius cannot be scaled to {target}")]
    Unscalable { target: f64 },

    #[error("spectral radius estimate did not converge after {iterations} iterations (last estimate {last_estimate})")]
    NoConvergence { iterations: usize, last_estimate: f64 },

    #[error("non-finite value in RK4 stage {stage} at t = {t}")]
    Divergence { stage: usize, t: f64 },

    #[error("signal grid does not match integration grid: {0}")]
    Alignment(String),

    #[error("requested window is not covered: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("normal equations are singular; use beta > 0")]
    Singular,

    #[error("ridge solution residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unscalable { .. }
                | Error::NoConvergence { .. }
                | Error::Divergence { .. }
                | Error::Singular
                | Error::Residual { .. }
        )
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
