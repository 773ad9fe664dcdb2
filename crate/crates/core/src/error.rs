use thiserror::Error;

/// Errors raised by model evaluation, solvers, likelihoods and fitting.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SaddleError {
    #[error("point outside the model domain: {0}")]
    Domain(String),
    #[error("operation not supported: {0}")]
    NotSupported(String),
    #[error("no saddlepoint found (residual {residual:.3e} after {iterations} iterations)")]
    NoSaddlepoint { residual: f64, iterations: usize },
    #[error("Hessian numerically singular (condition number {cond:.3e})")]
    SingularHessian { cond: f64 },
    #[error("quadrature produced a non-positive P-factor ({value:.3e})")]
    QuadratureNonpositive { value: f64 },
    #[error("quadrature imaginary part too large (|Im|/Re = {ratio:.3e})")]
    QuadratureImaginary { ratio: f64 },
    #[error("integrand tail did not decay (tail/peak ratio {ratio:.3e})")]
    TailNotDecayed { ratio: f64 },
    #[error("matrix rank deficient: {0}")]
    RankDeficient(String),
    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("all grid log-likelihood values are -inf")]
    GridUnderflow,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, SaddleError>;
