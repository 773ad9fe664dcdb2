//! Local maximum likelihood under any [`ApproximationKind`], and identifiability diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::cgf::{eval, Block, CgfModel, FdPolicy};
use crate::error::{Result, SaddleError};
use crate::likelihood::{grad_log_likelihood, log_likelihood, ApproximationKind, Observation};
use crate::linalg::{is_negative_definite, max_abs, numerical_rank, sym_eigenvalues, symmetrize, SpdFactor};
use crate::models::{ExpFamilyAdapter, ExpFamilyModel};
use crate::quadrature::QuadratureConfig;
use crate::saddle::{solve_saddlepoint, SolverConfig};

/// Where the `Exact` log-likelihood comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExactSource {
    /// Numerical inversion of the MGF.
    #[default]
    Quadrature,
    /// The model's closed-form density.
    ClosedForm,
}

#[derive(Debug, Clone)]
pub struct MleOptions {
    /// Gradient tolerance, scaled by `1 + n`.
    pub tol: f64,
    pub max_iter: usize,
    pub quad: QuadratureConfig,
    pub exact_source: ExactSource,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, quad: QuadratureConfig::default(), exact_source: ExactSource::Quadrature }
    }
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub theta_hat: DVector<f64>,
    pub kind: ApproximationKind,
    /// `‖∇θ log L̂‖∞` at `theta_hat`.
    pub grad_norm: f64,
    /// Observed Hessian of the log-likelihood at `theta_hat`.
    pub hessian_theta: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Smallest |eigenvalue| below `1e-8` times the largest.
    pub near_singular: bool,
    pub trace: Vec<(DVector<f64>, f64)>,
}

impl MleFit {
    /// `Err(NotConverged)` unless the fit converged.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(SaddleError::NotConverged { iterations: self.iterations, grad_norm: self.grad_norm })
        }
    }
}

struct Objective<'a> {
    model: &'a dyn CgfModel,
    obs: &'a Observation,
    kind: ApproximationKind,
    opts: &'a MleOptions,
}

impl Objective<'_> {
    fn closed_form(&self) -> bool {
        self.kind == ApproximationKind::Exact && self.opts.exact_source == ExactSource::ClosedForm
    }

    fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        if !self.model.theta_in_domain(theta) {
            return Err(SaddleError::Domain(format!("theta {:?} outside parameter domain", theta.as_slice())));
        }
        if self.closed_form() {
            let v = self
                .model
                .closed_form_log_density(theta, &self.obs.x, self.obs.n)
                .ok_or_else(|| SaddleError::NotSupported(format!("{} has no closed-form density", self.model.name())))?;
            return if v.is_finite() { Ok(v) } else { Err(SaddleError::Domain("density is zero".into())) };
        }
        Ok(log_likelihood(self.model, theta, self.obs, self.kind, &self.opts.quad)?.total)
    }

    fn grad(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if self.closed_form() {
            if let Some(g) = self.model.closed_form_grad(theta, &self.obs.x, self.obs.n) {
                return Ok(g);
            }
            let mut g = DVector::zeros(theta.len());
            for j in 0..theta.len() {
                let h = 1e-6f64.max(1e-6 * theta[j].abs());
                let (mut tp, mut tm) = (theta.clone(), theta.clone());
                tp[j] += h;
                tm[j] -= h;
                g[j] = (self.value(&tp)? - self.value(&tm)?) / (2.0 * h);
            }
            return Ok(g);
        }
        grad_log_likelihood(self.model, theta, self.obs, self.kind, &self.opts.quad)
    }

    fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.kind == ApproximationKind::ZerothOrder {
            return zeroth_order_hessian(self.model, theta, self.obs);
        }
        let p = theta.len();
        let mut h = DMatrix::zeros(p, p);
        for j in 0..p {
            let step = 1e-5 * theta[j].abs().max(1.0);
            let (mut tp, mut tm) = (theta.clone(), theta.clone());
            tp[j] += step;
            tm[j] -= step;
            let col = match (self.model.theta_in_domain(&tp), self.model.theta_in_domain(&tm)) {
                (true, true) => (self.grad(&tp)? - self.grad(&tm)?) / (2.0 * step),
                (true, false) => (self.grad(&tp)? - self.grad(theta)?) / step,
                (false, true) => (self.grad(theta)? - self.grad(&tm)?) / step,
                (false, false) => return Err(SaddleError::Domain("no room for a finite-difference Hessian".into())),
            };
            h.set_column(j, &col);
        }
        Ok(symmetrize(&h))
    }
}

/// `n(∇θ∇θK0 − BᵀK0''⁻¹B)` at the saddlepoint, the Hessian of the zeroth-order log-likelihood.
pub fn zeroth_order_hessian(model: &dyn CgfModel, theta: &DVector<f64>, obs: &Observation) -> Result<DMatrix<f64>> {
    let sr = solve_saddlepoint(model, theta, &obs.y(), &SolverConfig::default())?;
    let e = eval(model, &sr.s_hat, theta, &[Block::HessTheta, Block::Cross], FdPolicy::Allow)?;
    let b = e.cross.unwrap();
    let h = e.hess_theta.unwrap() + b.transpose() * &sr.sens_theta;
    Ok(symmetrize(&h) * obs.n)
}

/// Ascent direction: Newton where the Hessian is negative definite, otherwise the
/// eigenvalue-modulus modification.
fn ascent_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let eig = h.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-10 * scale).max(1e-300);
    let mut d = DVector::zeros(g.len());
    for i in 0..g.len() {
        let v = eig.eigenvectors.column(i);
        let lam = eig.eigenvalues[i].abs().max(floor);
        d += v * (v.dot(g) / lam);
    }
    d
}

/// Largest `t ≤ 1` keeping `θ + t·d` strictly inside the box.
fn box_step(theta: &DVector<f64>, d: &DVector<f64>, bounds: &[(f64, f64)]) -> f64 {
    let mut t = 1.0f64;
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if d[j] > 0.0 && theta[j] + d[j] >= hi {
            t = t.min(0.99 * (hi - theta[j]) / d[j]);
        } else if d[j] < 0.0 && theta[j] + d[j] <= lo {
            t = t.min(0.99 * (lo - theta[j]) / d[j]);
        }
    }
    t
}

fn near_singular(h: &DMatrix<f64>) -> bool {
    let ev = sym_eigenvalues(h);
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    min < 1e-8 * max
}

/// Damped Newton ascent on the chosen log-likelihood inside `bounds`.
///
/// A fit that stalls or exhausts `max_iter` is returned with `converged = false`;
/// use [`MleFit::require_converged`] to turn that into an error.
pub fn fit_mle(
    model: &dyn CgfModel,
    obs: &Observation,
    kind: ApproximationKind,
    theta_init: &DVector<f64>,
    bounds: &[(f64, f64)],
    opts: &MleOptions,
) -> Result<MleFit> {
    let p = model.signature().p;
    if theta_init.len() != p || bounds.len() != p {
        return Err(SaddleError::InvalidInput(format!("expected {p} parameters and bounds")));
    }
    if !model.theta_in_domain(theta_init) {
        return Err(SaddleError::Domain(format!("initial theta {:?} outside parameter domain", theta_init.as_slice())));
    }
    if bounds.iter().zip(theta_init.iter()).any(|(&(lo, hi), &t)| !(lo < t && t < hi)) {
        return Err(SaddleError::Domain("initial theta outside the box".into()));
    }
    let obj = Objective { model, obs, kind, opts };
    let gtol = opts.tol * (1.0 + obs.n);
    let mut theta = theta_init.clone();
    let mut f = obj.value(&theta)?;
    let mut trace = vec![(theta.clone(), f)];
    let mut iterations = 0;
    loop {
        let g = obj.grad(&theta)?;
        let h = obj.hessian(&theta)?;
        let grad_norm = g.amax();
        let negdef = is_negative_definite(&h);
        let finish = |converged: bool, iterations: usize, theta: DVector<f64>, trace| MleFit {
            theta_hat: theta,
            kind,
            grad_norm,
            near_singular: near_singular(&h),
            hessian_theta: h.clone(),
            iterations,
            converged,
            trace,
        };
        if grad_norm <= gtol && negdef {
            return Ok(finish(true, iterations, theta, trace));
        }
        if iterations >= opts.max_iter {
            return Ok(finish(false, iterations, theta, trace));
        }
        iterations += 1;
        let d = ascent_direction(&h, &g);
        let mut t = box_step(&theta, &d, bounds);
        let predicted = g.dot(&d);
        let noise = 1e-9 * (1.0 + f.abs());
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &theta + &d * t;
            let inside = bounds.iter().zip(trial.iter()).all(|(&(lo, hi), &v)| lo < v && v < hi);
            if let Some(Ok(ft)) = inside.then(|| obj.value(&trial)) {
                let armijo = ft >= f + 1e-4 * t * predicted;
                let flat = predicted * t <= noise && ft >= f - noise;
                if armijo || flat {
                    theta = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(finish(false, iterations, theta, trace));
        }
        trace.push((theta.clone(), f));
    }
}

/// Fits two kinds from the same start and box; `gap = ‖θ̂₁ − θ̂₂‖∞`.
pub fn mle_error_pair(
    model: &dyn CgfModel,
    obs: &Observation,
    kinds: (ApproximationKind, ApproximationKind),
    theta_init: &DVector<f64>,
    bounds: &[(f64, f64)],
    opts: &MleOptions,
) -> Result<(MleFit, MleFit, f64)> {
    let a = fit_mle(model, obs, kinds.0, theta_init, bounds, opts)?.require_converged()?;
    let b = fit_mle(model, obs, kinds.1, theta_init, bounds, opts)?.require_converged()?;
    let gap = (&a.theta_hat - &b.theta_hat).amax();
    Ok((a, b, gap))
}

/// A user-declared split `θ = (ω, ν)` where only `ω` moves the mean.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSplit {
    pub omega: Vec<usize>,
    pub nu: Vec<usize>,
}

impl ParameterSplit {
    pub fn new(omega: Vec<usize>, nu: Vec<usize>) -> Self {
        Self { omega, nu }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentifiabilityMode {
    Full,
    Partial,
}

#[derive(Debug, Clone)]
pub struct PartialDiagnostics {
    pub b_omega: DMatrix<f64>,
    pub j: DMatrix<f64>,
    /// `‖JAJ − J‖∞`.
    pub projection_error: f64,
    /// `ξ0ᵀJ(∂K0''/∂ν_j)Jξ0 − tr(A⁻¹∂K0''/∂ν_j)` per `ν_j`, when `ξ0` is given.
    pub xi0_residuals: Option<DVector<f64>>,
    pub e: Option<DMatrix<f64>>,
    pub e_negdef: Option<bool>,
    /// Largest entry of `B_ωᵀA⁻¹(∂K0''/∂ν_j)J` over `j`.
    pub offdiag_max: f64,
    pub offdiag_ok: bool,
}

#[derive(Debug, Clone)]
pub struct IdentifiabilityReport {
    pub mode: IdentifiabilityMode,
    /// `K0''(s0; θ0)`.
    pub a: DMatrix<f64>,
    /// `∇s∇θK0(s0; θ0)`, m × p.
    pub b: DMatrix<f64>,
    /// `∇θ∇θK0 − BᵀA⁻¹B`.
    pub h: DMatrix<f64>,
    pub h_negdef: bool,
    pub partial: Option<PartialDiagnostics>,
}

/// Rate-function Hessian at `(s0, θ0)` and, given a split, the partially identifiable diagnostics.
pub fn identifiability(
    model: &dyn CgfModel,
    s0: &DVector<f64>,
    theta0: &DVector<f64>,
    split: Option<&ParameterSplit>,
    xi0: Option<&DVector<f64>>,
) -> Result<IdentifiabilityReport> {
    let sig = model.signature();
    if s0.len() != sig.m || theta0.len() != sig.p {
        return Err(SaddleError::InvalidInput("dimension mismatch".into()));
    }
    if !model.theta_in_domain(theta0) || !model.s_in_domain(s0, theta0) {
        return Err(SaddleError::Domain("(s0, theta0) is not interior".into()));
    }
    let mut blocks = vec![Block::HessS, Block::Cross, Block::HessTheta];
    if split.is_some() {
        blocks.extend([Block::DHessDTheta, Block::D2HessDTheta2]);
    }
    let e = eval(model, s0, theta0, &blocks, FdPolicy::Allow)?;
    let a = e.hess_s.unwrap();
    let b = e.cross.unwrap();
    let fa = SpdFactor::new(&a)?;
    let a_inv = fa.inverse();
    let h = symmetrize(&(e.hess_theta.unwrap() - b.transpose() * fa.solve_mat(&b)));
    let h_negdef = is_negative_definite(&h);
    let Some(split) = split else {
        return Ok(IdentifiabilityReport { mode: IdentifiabilityMode::Full, a, b, h, h_negdef, partial: None });
    };
    if s0.iter().any(|&v| v != 0.0) {
        return Err(SaddleError::InvalidInput("partial mode requires s0 = 0".into()));
    }
    let mut seen: Vec<usize> = split.omega.iter().chain(&split.nu).copied().collect();
    seen.sort_unstable();
    if seen != (0..sig.p).collect::<Vec<_>>() {
        return Err(SaddleError::InvalidInput("split must partition the parameter indices".into()));
    }
    let p1 = split.omega.len();
    let mut b_omega = DMatrix::zeros(sig.m, p1);
    for (c, &i) in split.omega.iter().enumerate() {
        b_omega.set_column(c, &b.column(i));
    }
    if p1 > 0 && numerical_rank(&b_omega, 1e-10) < p1 {
        return Err(SaddleError::RankDeficient(format!("B_omega has rank below {p1}")));
    }
    let j = if p1 == 0 {
        a_inv.clone()
    } else {
        let ab = &a_inv * &b_omega;
        let inner = SpdFactor::new(&symmetrize(&(b_omega.transpose() * &ab)))?;
        symmetrize(&(&a_inv - &ab * inner.solve_mat(&ab.transpose())))
    };
    let projection_error = max_abs(&(&j * &a * &j - &j));
    let dh = e.dhess_dtheta.unwrap();
    let d2h = e.d2hess_dtheta2.unwrap();
    let dnu: Vec<&DMatrix<f64>> = split.nu.iter().map(|&i| &dh[i]).collect();
    let offdiag_max = dnu
        .iter()
        .map(|d| max_abs(&(b_omega.transpose() * &a_inv * *d * &j)))
        .fold(0.0, f64::max);
    let (xi0_residuals, e_mat) = match xi0 {
        Some(xi) => {
            if xi.len() != sig.m {
                return Err(SaddleError::InvalidInput("xi0 has the wrong dimension".into()));
            }
            let jx = &j * xi;
            let res = DVector::from_iterator(
                dnu.len(),
                dnu.iter().map(|d| jx.dot(&(*d * &jx)) - (&a_inv * *d).trace()),
            );
            let p2 = dnu.len();
            let a_inv2 = &a_inv * &a_inv;
            let mut em = DMatrix::zeros(p2, p2);
            for (r, &ni) in split.nu.iter().enumerate() {
                for (c, &nj) in split.nu.iter().enumerate() {
                    let d2 = &d2h[ni][nj];
                    let inner = d2 * 0.5 - dnu[r] * &j * dnu[c];
                    let tr = (&a_inv * d2 - &a_inv2 * dnu[r] * dnu[c]).trace();
                    em[(r, c)] = jx.dot(&(inner * &jx)) - 0.5 * tr;
                }
            }
            (Some(res), Some(symmetrize(&em)))
        }
        None => (None, None),
    };
    let e_negdef = e_mat.as_ref().map(is_negative_definite);
    Ok(IdentifiabilityReport {
        mode: IdentifiabilityMode::Partial,
        a,
        b,
        h,
        h_negdef,
        partial: Some(PartialDiagnostics {
            b_omega,
            j,
            projection_error,
            xi0_residuals,
            e: e_mat,
            e_negdef,
            offdiag_max,
            offdiag_ok: offdiag_max <= 1e-10,
        }),
    })
}

#[derive(Debug, Clone)]
pub struct ExpFamilyMle {
    /// `η̂ = η(θ) + ŝ(θ; y)`.
    pub eta_hat: DVector<f64>,
    /// `η⁻¹(η̂)` when the natural map is invertible there.
    pub theta_hat: Option<DVector<f64>>,
    /// Largest `‖η̂‖∞` disagreement between probes.
    pub probe_spread: f64,
}

/// Natural-parameter MLE from `ρ'(η̂) = y`, computed once per probe parameter.
pub fn expfamily_mle<F: ExpFamilyAdapter>(
    model: &ExpFamilyModel<F>,
    obs: &Observation,
    probes: &[DVector<f64>],
) -> Result<ExpFamilyMle> {
    let first = probes.first().ok_or_else(|| SaddleError::InvalidInput("at least one probe is required".into()))?;
    let y = obs.y();
    let eta_at = |theta: &DVector<f64>| -> Result<DVector<f64>> {
        let sr = solve_saddlepoint(model, theta, &y, &SolverConfig::default())?;
        Ok(model.family.natural(theta) + sr.s_hat)
    };
    let eta_hat = eta_at(first)?;
    let mut probe_spread = 0.0f64;
    for probe in &probes[1..] {
        probe_spread = probe_spread.max((eta_at(probe)? - &eta_hat).amax());
    }
    let theta_hat = model.family.inverse_natural(&eta_hat);
    Ok(ExpFamilyMle { eta_hat, theta_hat, probe_spread })
}
