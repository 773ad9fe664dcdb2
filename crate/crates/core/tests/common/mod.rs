#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use saddlemax_core::models::{
    compose_concat, BirthDeathModel, ExpFamilyModel, GammaModel, LinearMapModel, MixtureNormalModel, NormalModel,
    NormalWithSquareModel, PoissonModel, PoissonNatural, ProductModel,
};
use saddlemax_core::CgfModel;

pub type ThetaGen = fn(&mut ChaCha8Rng) -> DVector<f64>;

pub struct ZooEntry {
    pub name: &'static str,
    pub model: Arc<dyn CgfModel>,
    pub theta: ThetaGen,
}

fn u(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

/// Every built-in model plus one instance of each combinator.
pub fn zoo() -> Vec<ZooEntry> {
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
    vec![
        ZooEntry { name: "poisson", model: Arc::new(PoissonModel), theta: |r| v(&[u(r, 0.5, 6.0)]) },
        ZooEntry {
            name: "poisson-natural",
            model: Arc::new(ExpFamilyModel::new(PoissonNatural)),
            theta: |r| v(&[u(r, 0.5, 6.0)]),
        },
        ZooEntry { name: "gamma", model: Arc::new(GammaModel::free()), theta: |r| v(&[u(r, 0.5, 4.0), u(r, 0.8, 3.0)]) },
        ZooEntry { name: "gamma-fi", model: Arc::new(GammaModel::fi()), theta: |r| v(&[u(r, 0.5, 4.0)]) },
        ZooEntry { name: "gamma-pi", model: Arc::new(GammaModel::pi()), theta: |r| v(&[u(r, 0.8, 4.0)]) },
        ZooEntry {
            name: "normal-2d",
            model: Arc::new(NormalModel::mean_only(cov.clone()).unwrap()),
            theta: |r| v(&[u(r, -2.0, 2.0), u(r, -2.0, 2.0)]),
        },
        ZooEntry {
            name: "normal-logscale",
            model: Arc::new(NormalModel::mean_log_scale(cov).unwrap()),
            theta: |r| v(&[u(r, -2.0, 2.0), u(r, -2.0, 2.0), u(r, -0.5, 0.5)]),
        },
        ZooEntry {
            name: "normal-meanvar",
            model: Arc::new(NormalModel::mean_variance()),
            theta: |r| v(&[u(r, -2.0, 2.0), u(r, 0.3, 3.0)]),
        },
        ZooEntry {
            name: "normal-square",
            model: Arc::new(NormalWithSquareModel::normal_with_square()),
            theta: |r| v(&[u(r, -1.0, 1.0), u(r, 0.5, 2.0)]),
        },
        ZooEntry {
            name: "birth-death",
            model: Arc::new(BirthDeathModel::new(1.0).unwrap()),
            theta: |r| {
                let nu = u(r, 0.5, 2.0);
                v(&[u(r, -0.6, 0.6) * nu, nu])
            },
        },
        ZooEntry { name: "mixture-normal", model: Arc::new(MixtureNormalModel), theta: |r| v(&[u(r, -1.5, 1.5)]) },
        ZooEntry {
            name: "concat-gamma-fi",
            model: Arc::new(compose_concat(Arc::new(GammaModel::fi()), vec![1.0, 2.0]).unwrap()),
            theta: |r| v(&[u(r, 0.5, 3.0)]),
        },
        ZooEntry {
            name: "linear-normal-square",
            model: Arc::new(
                LinearMapModel::with_offset(a, v(&[0.5, -1.0]), Arc::new(NormalWithSquareModel::normal_with_square()))
                    .unwrap(),
            ),
            theta: |r| v(&[u(r, -1.0, 1.0), u(r, 0.5, 2.0)]),
        },
        ZooEntry {
            name: "product-poisson-gamma",
            model: Arc::new(
                ProductModel::new(vec![Arc::new(PoissonModel), Arc::new(GammaModel::fi())]).unwrap(),
            ),
            theta: |r| v(&[u(r, 0.5, 5.0), u(r, 0.5, 4.0)]),
        },
    ]
}

/// A random dual point well inside `S_θ`: the point and its 1.5× dilation are both interior.
pub fn interior_s(model: &dyn CgfModel, theta: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let m = model.signature().m;
    let mut s = DVector::from_fn(m, |_, _| u(rng, -0.4, 0.4));
    for _ in 0..60 {
        if model.s_in_domain(&(&s * 1.5), theta) && model.s_in_domain(&s, theta) {
            return s;
        }
        s *= 0.5;
    }
    DVector::zeros(m)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}
