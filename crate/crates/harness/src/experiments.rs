//! The four experiment kinds. Every parallel loop collects into an indexed vector, so
//! results do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use saddlemax_core::mle::{fit_mle, identifiability, ExactSource, MleOptions};
use saddlemax_core::special::log_sum_exp;
use saddlemax_core::{
    log_likelihood, ApproximationKind, CgfModel, Observation, QuadratureConfig, SaddleError,
};
use serde_json::json;

use crate::config::{ExperimentConfig, ReferenceSource};
use crate::registry::ModelEntry;
use crate::report::{num, Table};
use crate::HarnessError;

/// Number of largest-`n` points used for slope fits.
pub const SLOPE_WINDOW: usize = 5;
pub const NOISY_R2: f64 = 0.98;
pub const MAX_FAILED_FRACTION: f64 = 0.01;

/// Least-squares line through `(log n, log gap)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// The `n` values used.
    pub window: Vec<f64>,
    pub noisy: bool,
}

/// Fits on the largest [`SLOPE_WINDOW`] points with positive, finite `values`.
pub fn fit_slope(ns: &[f64], values: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(n, v)| (*n, *v))
        .collect();
    let pts = &pts[pts.len().saturating_sub(SLOPE_WINDOW)..];
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        window: pts.iter().map(|p| p.0).collect(),
        noisy: r_squared < NOISY_R2,
    })
}

fn exact_source(model: &dyn CgfModel, reference: ReferenceSource) -> ExactSource {
    match reference {
        ReferenceSource::ClosedForm => ExactSource::ClosedForm,
        ReferenceSource::Quadrature => ExactSource::Quadrature,
        ReferenceSource::Auto if model.capabilities().has_closed_form_likelihood => ExactSource::ClosedForm,
        ReferenceSource::Auto => ExactSource::Quadrature,
    }
}

fn source_label(s: ExactSource) -> &'static str {
    match s {
        ExactSource::ClosedForm => "closed_form",
        ExactSource::Quadrature => "quadrature",
    }
}

fn mle_options(cfg: &ExperimentConfig, source: ExactSource) -> MleOptions {
    MleOptions { tol: cfg.tol.unwrap_or(1e-10), exact_source: source, ..MleOptions::default() }
}

/// Mean summand for the configured observation at `n`.
pub fn target_mean(cfg: &ExperimentConfig, model: &dyn CgfModel, n: f64) -> Result<DVector<f64>, HarnessError> {
    if let Some(y0) = &cfg.y0 {
        return Ok(DVector::from_row_slice(y0));
    }
    let m = model.signature().m;
    let theta = cfg.theta_prime();
    if !model.theta_in_domain(&theta) {
        return Err(HarnessError::Config("theta0 outside the model's parameter domain".into()));
    }
    let mut y = model.grad_s(&DVector::zeros(m), &theta);
    if let Some(xi) = &cfg.xi {
        if xi.len() != m {
            return Err(HarnessError::Config(format!("xi must have length {m}")));
        }
        y += DVector::from_row_slice(xi) / n.sqrt();
    }
    Ok(y)
}

/// Log-likelihood honouring the configured exact source.
fn log_lik(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    obs: &Observation,
    kind: ApproximationKind,
    source: ExactSource,
) -> saddlemax_core::Result<f64> {
    if kind == ApproximationKind::Exact && source == ExactSource::ClosedForm {
        if !model.theta_in_domain(theta) {
            return Err(SaddleError::Domain("theta outside domain".into()));
        }
        return model
            .closed_form_log_density(theta, &obs.x, obs.n)
            .ok_or_else(|| SaddleError::NotSupported("no closed-form density".into()));
    }
    Ok(log_likelihood(model, theta, obs, kind, &QuadratureConfig::default())?.total)
}

fn gap(a: &DVector<f64>, b: &DVector<f64>, coords: Option<&[usize]>) -> f64 {
    let d = a - b;
    match coords {
        Some(c) => c.iter().map(|&i| d[i].abs()).fold(0.0, f64::max),
        None => d.amax(),
    }
}

fn with_exact_first(kinds: &[ApproximationKind]) -> Vec<ApproximationKind> {
    let mut out = vec![ApproximationKind::Exact];
    out.extend(kinds.iter().copied().filter(|k| *k != ApproximationKind::Exact));
    out
}

fn config_meta(cfg: &ExperimentConfig) -> serde_json::Value {
    json!({
        "config": cfg,
        "versions": {
            "saddlemax": env!("CARGO_PKG_VERSION"),
        },
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: f64,
    /// Indexed like [`ConvergeOutput::kinds`].
    pub theta: Vec<Option<DVector<f64>>>,
    pub grad_norm: Vec<Option<f64>>,
    /// Indexed like [`ConvergeOutput::pairs`].
    pub gaps: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ConvergeOutput {
    pub kinds: Vec<ApproximationKind>,
    pub pairs: Vec<(ApproximationKind, ApproximationKind)>,
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Vec<Option<SlopeFit>>,
    pub reference: ExactSource,
    pub p: usize,
}

impl ConvergeOutput {
    fn pair_index(&self, a: ApproximationKind, b: ApproximationKind) -> Option<usize> {
        self.pairs.iter().position(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    }

    pub fn slope(&self, a: ApproximationKind, b: ApproximationKind) -> Option<&SlopeFit> {
        self.pair_index(a, b).and_then(|i| self.slopes[i].as_ref())
    }

    pub fn gaps(&self, a: ApproximationKind, b: ApproximationKind) -> Vec<Option<f64>> {
        match self.pair_index(a, b) {
            Some(i) => self.rows.iter().map(|r| r.gaps[i]).collect(),
            None => vec![None; self.rows.len()],
        }
    }

    pub fn theta(&self, kind: ApproximationKind) -> Vec<Option<DVector<f64>>> {
        let i = self.kinds.iter().position(|k| *k == kind);
        self.rows.iter().map(|r| i.and_then(|i| r.theta[i].clone())).collect()
    }

    pub fn table(&self) -> Table {
        let mut header = vec!["n".to_string()];
        for k in &self.kinds {
            for j in 0..self.p {
                header.push(format!("theta_{}_{j}", k.label()));
            }
            header.push(format!("grad_norm_{}", k.label()));
        }
        for (a, b) in &self.pairs {
            header.push(format!("gap_{}_{}", a.label(), b.label()));
        }
        header.push("failures".into());
        let mut t = Table::new(header);
        for r in &self.rows {
            let mut row = vec![num(Some(r.n))];
            for (i, _) in self.kinds.iter().enumerate() {
                for j in 0..self.p {
                    row.push(num(r.theta[i].as_ref().map(|t| t[j])));
                }
                row.push(num(r.grad_norm[i]));
            }
            row.extend(r.gaps.iter().map(|g| num(*g)));
            row.push(r.failures.join("; "));
            t.rows.push(row);
        }
        t
    }

    pub fn meta(&self, cfg: &ExperimentConfig) -> serde_json::Value {
        let mut meta = config_meta(cfg);
        let slopes: serde_json::Map<String, serde_json::Value> = self
            .pairs
            .iter()
            .zip(&self.slopes)
            .map(|((a, b), s)| (format!("gap_{}_{}", a.label(), b.label()), json!(s)))
            .collect();
        meta["slopes"] = serde_json::Value::Object(slopes);
        meta["slope_window"] = json!(format!("largest {SLOPE_WINDOW} n values with positive gap"));
        meta["reference"] = json!(source_label(self.reference));
        meta
    }
}

/// Fits every kind at every `n` and fits log-log slopes to the pairwise MLE gaps.
pub fn run_converge(cfg: &ExperimentConfig, entry: &ModelEntry) -> Result<ConvergeOutput, HarnessError> {
    cfg.validate()?;
    let model = entry.model.as_ref();
    let kinds = with_exact_first(&cfg.approximation_kinds()?);
    let pairs: Vec<_> = (0..kinds.len())
        .flat_map(|i| (i + 1..kinds.len()).map(move |j| (i, j)))
        .map(|(i, j)| (kinds[j], kinds[i]))
        .collect();
    let source = exact_source(model, cfg.reference);
    let opts = mle_options(cfg, source);
    let init = cfg.init_vec();
    let bounds = cfg.box_or(&entry.default_box);
    let coords = cfg.gap_coords.as_deref();
    let rows: Vec<ConvergenceRow> = cfg
        .n_grid
        .par_iter()
        .map(|&n| {
            let mut failures = Vec::new();
            let mut theta = vec![None; kinds.len()];
            let mut grad_norm = vec![None; kinds.len()];
            let obs = target_mean(cfg, model, n).and_then(|y| Ok(Observation::from_mean(y, n)?));
            match obs {
                Ok(obs) => {
                    for (i, &k) in kinds.iter().enumerate() {
                        match fit_mle(model, &obs, k, &init, &bounds, &opts).and_then(|f| f.require_converged()) {
                            Ok(f) => {
                                grad_norm[i] = Some(f.grad_norm);
                                theta[i] = Some(f.theta_hat);
                            }
                            Err(e) => failures.push(format!("{}: {e}", k.label())),
                        }
                    }
                }
                Err(e) => failures.push(e.to_string()),
            }
            let gaps = pairs
                .iter()
                .map(|(a, b)| {
                    let ia = kinds.iter().position(|k| k == a).unwrap();
                    let ib = kinds.iter().position(|k| k == b).unwrap();
                    match (&theta[ia], &theta[ib]) {
                        (Some(x), Some(y)) => Some(gap(x, y, coords)),
                        _ => None,
                    }
                })
                .collect();
            ConvergenceRow { n, theta, grad_norm, gaps, failures }
        })
        .collect();
    let slopes = (0..pairs.len())
        .map(|i| {
            let (ns, gs): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| r.gaps[i].map(|g| (r.n, g))).unzip();
            fit_slope(&ns, &gs)
        })
        .collect();
    Ok(ConvergeOutput { kinds, pairs, rows, slopes, reference: source, p: model.signature().p })
}

#[derive(Debug, Clone)]
pub struct SampleSummary {
    pub n: f64,
    pub kind: ApproximationKind,
    /// Mean of `√n(θ̂ − θ0)`.
    pub mean: DVector<f64>,
    /// Sample covariance of `√n(θ̂ − θ0)`.
    pub cov: DMatrix<f64>,
    /// Largest `‖θ̂_kind − θ̂_exact‖∞` over replicates, when `exact` was fitted.
    pub max_gap_vs_exact: Option<f64>,
    pub successes: usize,
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub kinds: Vec<ApproximationKind>,
    pub summaries: Vec<SampleSummary>,
    /// `(n, replicate, θ̂ per kind)`; `None` for failed replicates.
    pub replicates: Vec<(f64, usize, Option<Vec<DVector<f64>>>)>,
    pub failed: usize,
    pub total: usize,
    /// `−H⁻¹` at `theta0` when the data come from the fitted model.
    pub predicted_cov: Option<DMatrix<f64>>,
    pub reference: ExactSource,
}

impl SampleOutput {
    pub fn summary(&self, n: f64, kind: ApproximationKind) -> Option<&SampleSummary> {
        self.summaries.iter().find(|s| s.n == n && s.kind == kind)
    }

    pub fn table(&self, p: usize) -> Table {
        let mut header = vec!["n".to_string(), "replicate".to_string()];
        for k in &self.kinds {
            for j in 0..p {
                header.push(format!("theta_{}_{j}", k.label()));
            }
        }
        header.push("status".into());
        let mut t = Table::new(header);
        for (n, r, fits) in &self.replicates {
            let mut row = vec![num(Some(*n)), r.to_string()];
            match fits {
                Some(f) => {
                    for th in f {
                        row.extend(th.iter().map(|v| num(Some(*v))));
                    }
                    row.push("ok".into());
                }
                None => {
                    row.extend(std::iter::repeat_n(String::new(), self.kinds.len() * p));
                    row.push("failed".into());
                }
            }
            t.rows.push(row);
        }
        t
    }

    pub fn meta(&self, cfg: &ExperimentConfig) -> serde_json::Value {
        let mut meta = config_meta(cfg);
        meta["summaries"] = json!(self
            .summaries
            .iter()
            .map(|s| json!({
                "n": s.n,
                "kind": s.kind.label(),
                "mean": s.mean.as_slice(),
                "cov": s.cov.as_slice(),
                "max_gap_vs_exact": s.max_gap_vs_exact,
                "successes": s.successes,
            }))
            .collect::<Vec<_>>());
        meta["failed"] = json!(self.failed);
        meta["total"] = json!(self.total);
        meta["predicted_cov"] = json!(self.predicted_cov.as_ref().map(|c| c.as_slice().to_vec()));
        meta["reference"] = json!(source_label(self.reference));
        meta["rng"] = json!("ChaCha8 seeded with seed ^ replicate ^ (n_index << 32)");
        meta
    }
}

fn mean_cov(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let p = samples.first().map_or(0, |s| s.len());
    let k = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(p), |acc, s| acc + s) / k;
    let mut cov = DMatrix::zeros(p, p);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    let denom = (k - 1.0).max(1.0);
    (mean, cov / denom)
}

/// Monte-Carlo sampling distribution of `√n(θ̂ − θ0)` per kind.
pub fn run_sample(cfg: &ExperimentConfig, entry: &ModelEntry) -> Result<SampleOutput, HarnessError> {
    cfg.validate()?;
    let model = entry.model.as_ref();
    let kinds = cfg.approximation_kinds()?;
    if kinds.is_empty() {
        return Err(HarnessError::Config("sample needs at least one kind".into()));
    }
    let data = cfg.data_entry()?;
    let data_model: &dyn CgfModel = data.as_ref().map_or(model, |d| d.model.as_ref());
    let data_theta = DVector::from_row_slice(cfg.data_theta.as_deref().unwrap_or(&cfg.theta0));
    let theta0 = cfg.theta0_vec();
    let source = exact_source(model, cfg.reference);
    let opts = mle_options(cfg, source);
    let init = cfg.init_vec();
    let bounds = cfg.box_or(&entry.default_box);
    let jobs: Vec<(usize, f64, usize)> = cfg
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..cfg.replicates).map(move |r| (i, n, r)))
        .collect();
    let results: Vec<(f64, usize, Option<Vec<DVector<f64>>>)> = jobs
        .par_iter()
        .map(|&(i, n, r)| {
            let x = if cfg.deterministic {
                target_mean(cfg, model, n).ok().map(|y| y * n)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (r as u64) ^ ((i as u64) << 32));
                data_model.sample(&data_theta, n, &mut rng)
            };
            let fits = x.and_then(|x| Observation::new(x, n).ok()).and_then(|obs| {
                kinds
                    .iter()
                    .map(|&k| {
                        fit_mle(model, &obs, k, &init, &bounds, &opts)
                            .and_then(|f| f.require_converged())
                            .map(|f| f.theta_hat)
                            .ok()
                    })
                    .collect::<Option<Vec<_>>>()
            });
            (n, r, fits)
        })
        .collect();
    let total = results.len();
    let failed = results.iter().filter(|r| r.2.is_none()).count();
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(HarnessError::TooManyFailures { failed, total });
    }
    let exact_idx = kinds.iter().position(|k| *k == ApproximationKind::Exact);
    let mut summaries = Vec::new();
    for &n in &cfg.n_grid {
        let ok: Vec<&Vec<DVector<f64>>> = results.iter().filter(|r| r.0 == n).filter_map(|r| r.2.as_ref()).collect();
        for (i, &k) in kinds.iter().enumerate() {
            let scaled: Vec<DVector<f64>> = ok.iter().map(|f| (&f[i] - &theta0) * n.sqrt()).collect();
            let (mean, cov) = mean_cov(&scaled);
            let max_gap_vs_exact =
                exact_idx.map(|e| ok.iter().map(|f| (&f[i] - &f[e]).amax()).fold(0.0, f64::max));
            summaries.push(SampleSummary { n, kind: k, mean, cov, max_gap_vs_exact, successes: ok.len() });
        }
    }
    let predicted_cov = if data.is_none() {
        let s0 = DVector::zeros(model.signature().m);
        identifiability(model, &s0, &theta0, None, None)
            .ok()
            .and_then(|r| r.h.clone().try_inverse())
            .map(|hinv| -hinv)
    } else {
        None
    };
    Ok(SampleOutput { kinds, summaries, replicates: results, failed, total, predicted_cov, reference: source })
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub n: f64,
    pub kind: ApproximationKind,
    /// Posterior mean of `√n(Θ − θ0)`.
    pub mean: DVector<f64>,
    /// Posterior covariance of `√n(Θ − θ0)`.
    pub cov: DMatrix<f64>,
    /// Posterior mean of `Θ`.
    pub theta_mean: DVector<f64>,
    pub finite_points: usize,
}

#[derive(Debug, Clone)]
pub struct PosteriorOutput {
    pub summaries: Vec<PosteriorSummary>,
    pub grid_points: usize,
    pub reference: ExactSource,
}

impl PosteriorOutput {
    pub fn summary(&self, n: f64, kind: ApproximationKind) -> Option<&PosteriorSummary> {
        self.summaries.iter().find(|s| s.n == n && s.kind == kind)
    }

    pub fn table(&self) -> Table {
        let p = self.summaries.first().map_or(0, |s| s.mean.len());
        let mut header = vec!["n".to_string(), "kind".to_string()];
        header.extend((0..p).map(|j| format!("theta_mean_{j}")));
        header.extend((0..p).map(|j| format!("scaled_mean_{j}")));
        for a in 0..p {
            for b in 0..p {
                header.push(format!("scaled_cov_{a}{b}"));
            }
        }
        header.push("finite_points".into());
        let mut t = Table::new(header);
        for s in &self.summaries {
            let mut row = vec![num(Some(s.n)), s.kind.label().to_string()];
            row.extend(s.theta_mean.iter().map(|v| num(Some(*v))));
            row.extend(s.mean.iter().map(|v| num(Some(*v))));
            row.extend(s.cov.transpose().iter().map(|v| num(Some(*v))));
            row.push(s.finite_points.to_string());
            t.rows.push(row);
        }
        t
    }

    pub fn meta(&self, cfg: &ExperimentConfig) -> serde_json::Value {
        let mut meta = config_meta(cfg);
        meta["grid_points"] = json!(self.grid_points);
        meta["prior"] = json!("flat on the grid box");
        meta["reference"] = json!(source_label(self.reference));
        meta
    }
}

/// Flat-prior posterior on a uniform grid `θ0 ± halfwidth/√n`.
pub fn run_posterior(cfg: &ExperimentConfig, entry: &ModelEntry) -> Result<PosteriorOutput, HarnessError> {
    cfg.validate()?;
    let model = entry.model.as_ref();
    let p = model.signature().p;
    if p > 2 {
        return Err(HarnessError::Config("posterior grids support p <= 2".into()));
    }
    let kinds = cfg.approximation_kinds()?;
    let source = exact_source(model, cfg.reference);
    let theta0 = cfg.theta0_vec();
    let points = cfg.grid_points.unwrap_or(if p == 1 { 4001 } else { 201 });
    if points < 2 {
        return Err(HarnessError::Config("grid_points must be at least 2".into()));
    }
    let hw = cfg.grid_halfwidth.unwrap_or(8.0);
    let mut summaries = Vec::new();
    for &n in &cfg.n_grid {
        let obs = Observation::from_mean(target_mean(cfg, model, n)?, n)?;
        let axis = |j: usize, i: usize| {
            let h = hw / n.sqrt();
            theta0[j] - h + 2.0 * h * i as f64 / (points - 1) as f64
        };
        let grid: Vec<DVector<f64>> = (0..points.pow(p as u32))
            .map(|idx| DVector::from_iterator(p, (0..p).map(|j| axis(j, (idx / points.pow(j as u32)) % points))))
            .collect();
        for &k in &kinds {
            let ll: Vec<f64> = grid
                .par_iter()
                .map(|th| log_lik(model, th, &obs, k, source).unwrap_or(f64::NEG_INFINITY))
                .collect();
            let finite_points = ll.iter().filter(|v| v.is_finite()).count();
            if finite_points == 0 {
                return Err(SaddleError::GridUnderflow.into());
            }
            let lse = log_sum_exp(&ll);
            let w: Vec<f64> = ll.iter().map(|v| (v - lse).exp()).collect();
            let theta_mean = grid.iter().zip(&w).fold(DVector::zeros(p), |acc, (g, wi)| acc + g * *wi);
            let mut cov = DMatrix::zeros(p, p);
            for (g, wi) in grid.iter().zip(&w) {
                let d = g - &theta_mean;
                cov += &d * d.transpose() * *wi;
            }
            summaries.push(PosteriorSummary {
                n,
                kind: k,
                mean: (&theta_mean - &theta0) * n.sqrt(),
                cov: cov * n,
                theta_mean,
                finite_points,
            });
        }
    }
    Ok(PosteriorOutput { summaries, grid_points: points, reference: source })
}

#[derive(Debug, Clone)]
pub struct SpaCltRow {
    /// `"s"` for a fixed tilt, `"offset"` for `y = y0(1 + c/√n)`.
    pub mode: &'static str,
    pub value: f64,
    pub n: f64,
    pub y: f64,
    /// `|exp(log L̂ − log L) − 1|` for the saddlepoint approximation.
    pub ratio_spa: f64,
    pub ratio_clt: f64,
}

#[derive(Debug, Clone)]
pub struct SpaCltOutput {
    pub rows: Vec<SpaCltRow>,
    /// Slopes of the saddlepoint ratio error against `n`, per nonzero tilt.
    pub spa_slopes: Vec<(f64, Option<SlopeFit>)>,
    pub clt_slopes: Vec<(f64, Option<SlopeFit>)>,
}

impl SpaCltOutput {
    pub fn table(&self) -> Table {
        let mut t = Table::new(
            ["mode", "value", "n", "y", "ratio_spa", "ratio_clt"].iter().map(|s| s.to_string()).collect(),
        );
        for r in &self.rows {
            t.rows.push(vec![
                r.mode.to_string(),
                num(Some(r.value)),
                num(Some(r.n)),
                num(Some(r.y)),
                num(Some(r.ratio_spa)),
                num(Some(r.ratio_clt)),
            ]);
        }
        t
    }

    pub fn meta(&self, cfg: &ExperimentConfig) -> serde_json::Value {
        let mut meta = config_meta(cfg);
        let slopes = |v: &[(f64, Option<SlopeFit>)]| v.iter().map(|(s, f)| json!({"s": s, "fit": f})).collect::<Vec<_>>();
        meta["spa_slopes"] = json!(slopes(&self.spa_slopes));
        meta["clt_slopes"] = json!(slopes(&self.clt_slopes));
        meta["slope_window"] = json!(format!("largest {SLOPE_WINDOW} n values"));
        meta
    }
}

/// Relative errors of the saddlepoint and normal approximations against the closed-form density.
pub fn run_spa_vs_clt(cfg: &ExperimentConfig, entry: &ModelEntry) -> Result<SpaCltOutput, HarnessError> {
    cfg.validate()?;
    let model = entry.model.as_ref();
    if model.signature().m != 1 || !model.capabilities().has_closed_form_likelihood {
        return Err(HarnessError::Config("spa-vs-clt needs a univariate model with a closed-form density".into()));
    }
    let theta = cfg.theta0_vec();
    let zero = DVector::zeros(1);
    let y0 = model.grad_s(&zero, &theta)[0];
    let s_values = cfg.s_values.clone().unwrap_or_else(|| vec![0.0, 0.25, 0.5]);
    let offsets = cfg.sqrt_n_offsets.clone().unwrap_or_default();
    let mut jobs: Vec<(&'static str, f64, f64)> = Vec::new();
    for &s in &s_values {
        jobs.extend(cfg.n_grid.iter().map(|&n| ("s", s, n)));
    }
    for &c in &offsets {
        jobs.extend(cfg.n_grid.iter().map(|&n| ("offset", c, n)));
    }
    let rows: Vec<SpaCltRow> = jobs
        .par_iter()
        .map(|&(mode, value, n)| -> Result<SpaCltRow, HarnessError> {
            let y = match mode {
                "s" => {
                    let s = DVector::from_element(1, value);
                    if !model.s_in_domain(&s, &theta) {
                        return Err(HarnessError::Config(format!("tilt {value} outside the dual domain")));
                    }
                    model.grad_s(&s, &theta)[0]
                }
                _ => y0 * (1.0 + value / n.sqrt()),
            };
            let obs = Observation::from_mean(DVector::from_element(1, y), n)?;
            let exact = log_lik(model, &theta, &obs, ApproximationKind::Exact, ExactSource::ClosedForm)?;
            let spa = log_lik(model, &theta, &obs, ApproximationKind::Saddlepoint, ExactSource::ClosedForm)?;
            let clt = log_lik(model, &theta, &obs, ApproximationKind::NormalApprox, ExactSource::ClosedForm)?;
            Ok(SpaCltRow {
                mode,
                value,
                n,
                y,
                ratio_spa: (spa - exact).exp_m1().abs(),
                ratio_clt: (clt - exact).exp_m1().abs(),
            })
        })
        .collect::<Result<_, _>>()?;
    let slopes_for = |pick: fn(&SpaCltRow) -> f64| {
        s_values
            .iter()
            .filter(|s| **s != 0.0)
            .map(|&s| {
                let (ns, vs): (Vec<f64>, Vec<f64>) =
                    rows.iter().filter(|r| r.mode == "s" && r.value == s).map(|r| (r.n, pick(r))).unzip();
                (s, fit_slope(&ns, &vs))
            })
            .collect::<Vec<_>>()
    };
    let spa_slopes = slopes_for(|r| r.ratio_spa);
    let clt_slopes = slopes_for(|r| r.ratio_clt);
    Ok(SpaCltOutput { rows, spa_slopes, clt_slopes })
}
