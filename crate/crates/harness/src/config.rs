use std::collections::BTreeMap;

use nalgebra::DVector;
use saddlemax_core::ApproximationKind;
use serde::{Deserialize, Serialize};

use crate::registry::{build_model, ModelEntry};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Converge,
    Sample,
    Posterior,
    #[serde(alias = "spa-vs-clt")]
    SpaVsClt,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "converge" => Some(Self::Converge),
            "sample" => Some(Self::Sample),
            "posterior" => Some(Self::Posterior),
            "spa-vs-clt" | "spa_vs_clt" => Some(Self::SpaVsClt),
            _ => None,
        }
    }
}

/// Source of the `exact` likelihood and the reference MLE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    /// Closed-form density when the model has one, else quadrature.
    #[default]
    Auto,
    ClosedForm,
    Quadrature,
}

/// An experiment description, read from JSON.
///
/// The observation for each `n` is `x = n·y` with `y = y0` when given, otherwise
/// `y = K0'(0; θ') + ξ/√n` where `θ'` is `theta0` with its leading coordinates replaced
/// by `omega_prime`, and `ξ = 0` when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub n_grid: Vec<f64>,
    #[serde(default)]
    pub kinds: Vec<String>,
    pub theta0: Vec<f64>,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    #[serde(default)]
    pub omega_prime: Option<Vec<f64>>,
    #[serde(default)]
    pub xi: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,

    /// Starting point for fits; defaults to `theta0`.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    /// Fitting box `[lo, hi]` per coordinate; defaults to the model's.
    #[serde(default)]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub reference: ReferenceSource,
    /// Coordinates entering the MLE gaps; all by default.
    #[serde(default)]
    pub gap_coords: Option<Vec<usize>>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Posterior grid points per coordinate.
    #[serde(default)]
    pub grid_points: Option<usize>,
    /// Posterior grid half-width in units of `1/√n`.
    #[serde(default)]
    pub grid_halfwidth: Option<f64>,
    /// Tilts for the saddlepoint-vs-CLT table.
    #[serde(default)]
    pub s_values: Option<Vec<f64>>,
    /// Relative mean offsets `c` giving `y = y0(1 + c/√n)` rows in the saddlepoint-vs-CLT table.
    #[serde(default)]
    pub sqrt_n_offsets: Option<Vec<f64>>,
    /// Use `x = n·y` for every replicate instead of sampling.
    #[serde(default)]
    pub deterministic: bool,
    /// Data-generating model for sampling, when it differs from the fitted model.
    #[serde(default)]
    pub data_model: Option<String>,
    #[serde(default)]
    pub data_params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub data_theta: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn value_to_param(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(a) => a.iter().map(value_to_param).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    }
}

fn stringify(params: &BTreeMap<String, serde_json::Value>) -> BTreeMap<String, String> {
    params.iter().map(|(k, v)| (k.clone(), value_to_param(v))).collect()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_grid.is_empty() {
            return Err(HarnessError::Config("n_grid must not be empty".into()));
        }
        if self.n_grid.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return Err(HarnessError::Config("n_grid entries must be positive".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config("n_grid must be strictly increasing".into()));
        }
        if self.replicates == 0 {
            return Err(HarnessError::Config("replicates must be at least 1".into()));
        }
        self.approximation_kinds()?;
        Ok(())
    }

    pub fn approximation_kinds(&self) -> Result<Vec<ApproximationKind>, HarnessError> {
        self.kinds
            .iter()
            .map(|k| ApproximationKind::parse(k).ok_or_else(|| HarnessError::Config(format!("unknown kind '{k}'"))))
            .collect()
    }

    pub fn model_entry(&self) -> Result<ModelEntry, HarnessError> {
        build_model(&self.model, &stringify(&self.params))
    }

    pub fn data_entry(&self) -> Result<Option<ModelEntry>, HarnessError> {
        self.data_model.as_ref().map(|id| build_model(id, &stringify(&self.data_params))).transpose()
    }

    pub fn theta0_vec(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.theta0)
    }

    pub fn init_vec(&self) -> DVector<f64> {
        DVector::from_row_slice(self.init.as_deref().unwrap_or(&self.theta0))
    }

    pub fn box_or(&self, default: &[(f64, f64)]) -> Vec<(f64, f64)> {
        match &self.bounds {
            Some(b) => b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
            None => default.to_vec(),
        }
    }

    /// `θ'`: `theta0` with leading coordinates replaced by `omega_prime`.
    pub fn theta_prime(&self) -> DVector<f64> {
        let mut t = self.theta0_vec();
        if let Some(w) = &self.omega_prime {
            for (i, v) in w.iter().enumerate() {
                t[i] = *v;
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal() {
        let cfg = ExperimentConfig::from_json(
            r#"{"model":"gamma-fi","experiment":"converge","n_grid":[8,16],"kinds":["spa","exact"],"theta0":[1.0]}"#,
        )
        .unwrap();
        assert_eq!(cfg.replicates, 1);
        assert_eq!(cfg.approximation_kinds().unwrap().len(), 2);
    }

    #[test]
    fn rejects_unsorted_grid() {
        let r = ExperimentConfig::from_json(
            r#"{"model":"poisson","experiment":"converge","n_grid":[16,8],"theta0":[1.0]}"#,
        );
        assert!(matches!(r, Err(HarnessError::Config(_))));
    }

    #[test]
    fn params_accept_numbers_and_lists() {
        let cfg = ExperimentConfig::from_json(
            r#"{"model":"gamma-pi","params":{"beta":[1,1]},"experiment":"spa-vs-clt","n_grid":[4],"theta0":[1.0]}"#,
        )
        .unwrap();
        assert_eq!(cfg.model_entry().unwrap().model.signature().m, 2);
    }
}
