//! Built-in models addressed by string id plus a `k=v,...` parameter table.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use saddlemax_core::models::{
    compose_concat, BirthDeathModel, ExpFamilyModel, GammaModel, MixtureNormalModel, NormalModel,
    NormalWithSquareModel, PoissonModel, PoissonNatural,
};
use saddlemax_core::CgfModel;

use crate::HarnessError;

pub const MODEL_IDS: [&str; 11] = [
    "poisson",
    "poisson-natural",
    "gamma",
    "gamma-fi",
    "gamma-pi",
    "normal",
    "normal-logscale",
    "normal-meanvar",
    "normal-square",
    "birth-death",
    "mixture-normal",
];

/// A constructed model with a sensible default parameter and fitting box.
#[derive(Clone)]
pub struct ModelEntry {
    pub id: String,
    pub model: Arc<dyn CgfModel>,
    pub default_theta: DVector<f64>,
    pub default_box: Vec<(f64, f64)>,
}

/// Parses `k=v,k=v`; list values use `;` as separator.
pub fn parse_params(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| HarnessError::Usage(format!("parameter '{part}' is not of the form key=value")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn get_f64(params: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64, HarnessError> {
    match params.get(key) {
        Some(v) => v.parse().map_err(|_| HarnessError::Usage(format!("{key}={v} is not a number"))),
        None => Ok(default),
    }
}

pub fn parse_list(text: &str) -> Result<Vec<f64>, HarnessError> {
    text.split([';', ',', ' '])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| HarnessError::Usage(format!("'{s}' is not a number"))))
        .collect()
}

const POS: (f64, f64) = (1e-6, 1e6);
const REAL: (f64, f64) = (-1e6, 1e6);

/// Builds a model. Recognised keys: `dim`, `var` (normal models), `t` (birth-death), and
/// `blocks` / `beta` to concatenate independent copies of any base model.
pub fn build_model(id: &str, params: &BTreeMap<String, String>) -> Result<ModelEntry, HarnessError> {
    let dim = get_f64(params, "dim", 1.0)? as usize;
    let var = get_f64(params, "var", 1.0)?;
    let v = |xs: &[f64]| DVector::from_row_slice(xs);
    let (model, theta, bx): (Arc<dyn CgfModel>, DVector<f64>, Vec<(f64, f64)>) = match id {
        "poisson" => (Arc::new(PoissonModel), v(&[1.0]), vec![POS]),
        "poisson-natural" => (Arc::new(ExpFamilyModel::new(PoissonNatural)), v(&[1.0]), vec![POS]),
        "gamma" => (Arc::new(GammaModel::free()), v(&[2.0, 1.0]), vec![POS, POS]),
        "gamma-fi" => (Arc::new(GammaModel::fi()), v(&[1.0]), vec![POS]),
        "gamma-pi" => (Arc::new(GammaModel::pi()), v(&[1.0]), vec![POS]),
        "normal" => {
            let cov = DMatrix::identity(dim, dim) * var;
            (Arc::new(NormalModel::mean_only(cov)?), DVector::zeros(dim), vec![REAL; dim])
        }
        "normal-logscale" => {
            let base = DMatrix::identity(dim, dim) * var;
            let mut bx = vec![REAL; dim];
            bx.push((-50.0, 50.0));
            (Arc::new(NormalModel::mean_log_scale(base)?), DVector::zeros(dim + 1), bx)
        }
        "normal-meanvar" => (Arc::new(NormalModel::mean_variance()), v(&[0.0, 1.0]), vec![REAL, POS]),
        "normal-square" => (Arc::new(NormalWithSquareModel::normal_with_square()), v(&[0.0, 1.0]), vec![REAL, POS]),
        "birth-death" => {
            let t = get_f64(params, "t", 1.0)?;
            (Arc::new(BirthDeathModel::new(t)?), v(&[0.2, 1.0]), vec![(-1e3, 1e3), (1e-6, 1e3)])
        }
        "mixture-normal" => (Arc::new(MixtureNormalModel), v(&[1.0]), vec![(-10.0, 10.0)]),
        other => {
            return Err(HarnessError::Usage(format!("unknown model '{other}'; known: {}", MODEL_IDS.join(", "))))
        }
    };
    let beta = match (params.get("beta"), params.get("blocks")) {
        (Some(b), _) => Some(parse_list(b)?),
        (None, Some(k)) => {
            let k: usize = k.parse().map_err(|_| HarnessError::Usage(format!("blocks={k} is not an integer")))?;
            Some(vec![1.0; k])
        }
        (None, None) => None,
    };
    let model: Arc<dyn CgfModel> = match beta {
        Some(beta) => Arc::new(compose_concat(model, beta)?),
        None => model,
    };
    Ok(ModelEntry { id: id.to_string(), model, default_theta: theta, default_box: bx })
}
