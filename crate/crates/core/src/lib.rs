//! Saddlepoint-approximated likelihoods for models given by their cumulant generating
//! functions, with exact-likelihood oracles by characteristic-function inversion.
//!
//! A model supplies the per-summand CGF `K0(s; θ)` of an observation `X` that is the sum
//! of `n` independent copies of `Y_θ`. From it the crate builds four log-likelihoods
//! (exact, saddlepoint, zeroth-order and normal approximation), their gradients, local
//! maximum likelihood fits and identifiability diagnostics.

pub mod cgf;
pub mod error;
pub mod likelihood;
pub mod linalg;
pub mod mle;
pub mod models;
pub mod quadrature;
pub mod saddle;
pub mod special;

pub use cgf::{
    eval, eval_complex_mgf, fd_derivative_oracle, Block, BlockValue, Capabilities, CgfEvaluation, CgfModel,
    FdPolicy, ModelSignature, SupportKind,
};
pub use error::{Result, SaddleError};
pub use likelihood::{
    exact_p_factor, grad_log_likelihood, log_likelihood, log_lstar0, ApproximationKind, FactoredLogLikelihood,
    Observation,
};
pub use mle::{
    expfamily_mle, fit_mle, identifiability, mle_error_pair, ExactSource, ExpFamilyMle, IdentifiabilityMode,
    IdentifiabilityReport, MleFit, MleOptions, ParameterSplit, PartialDiagnostics,
};
pub use quadrature::{QuadScheme, QuadratureConfig};
pub use saddle::{saddle_sensitivities, solve_saddlepoint, SaddleResult, SolverConfig};
