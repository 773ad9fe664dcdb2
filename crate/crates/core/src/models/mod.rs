//! Built-in models and combinators.

mod birth_death;
mod combinators;
mod expfamily;
mod gamma;
mod mixture;
mod normal;
mod poisson;

pub use birth_death::{birthdeath_alpha_q, BirthDeathModel};
pub use combinators::{compose_concat, compose_linear, ConcatModel, LinearMapModel, ProductModel};
pub use expfamily::{ExpFamilyAdapter, ExpFamilyModel, NormalSquareFamily, NormalWithSquareModel, PoissonNatural};
pub use gamma::{GammaModel, GammaVariant};
pub use mixture::MixtureNormalModel;
pub use normal::{NormalModel, NormalParam};
pub use poisson::PoissonModel;

use nalgebra::{DMatrix, DVector};

pub(crate) fn scalar_vec(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

pub(crate) fn scalar_mat(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Rounds a convolution count to an integer when a sampler needs one.
pub(crate) fn integer_count(n: f64) -> Option<u64> {
    let r = n.round();
    if r >= 1.0 && (n - r).abs() < 1e-9 {
        Some(r as u64)
    } else {
        None
    }
}
