use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected length {expected}, got {given}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        given: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0} has no closed-form proximal map")]
    NoClosedForm(&'static str),

    #[error("{0} is not differentiable")]
    NotSmooth(&'static str),

    #[error("step sizes violate convergence requirement: {0}")]
    StepSize(String),

    #[error("forward-backward needs an identity regularisation operator; use pdps for composed regularisers")]
    ComposedRegulariser,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("operator has no eigenvalue above the threshold (zero operator)")]
    ZeroOperator,

    #[error("subgradient is not a member of the subdifferential (violation {0:e})")]
    NotASubgradient(f64),

    #[error("iteration did not converge within {iterations} iterations (last change {last_change:e})")]
    NotConverged {
        iterations: usize,
        last_change: f64,
        last_iterate: Vec<f64>,
    },

    #[error("invalid source certificate: residual {0:e}")]
    InvalidCertificate(f64),

    #[error("jacobian action disagrees with finite differences (relative error {0:e})")]
    JacobianMismatch(f64),

    #[error("image format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, given: usize) -> Result<()> {
    if expected == given {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            given,
        })
    }
}
