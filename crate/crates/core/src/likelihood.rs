//! Factored log-likelihoods `log L = n·log L*0(ŝ, θ) + log P` and their θ-gradients.

use nalgebra::DVector;

use crate::cgf::{eval, Block, CgfModel, FdPolicy};
use crate::error::{Result, SaddleError};
use crate::linalg::{gaussian_logpdf, gaussian_logpdf_grad, SpdFactor};
use crate::quadrature::{p_factor, QuadratureConfig};
use crate::saddle::{solve_saddlepoint, SaddleResult, SolverConfig};

pub use crate::quadrature::exact_p_factor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ApproximationKind {
    /// True likelihood, with the P-factor from numerical inversion.
    Exact,
    /// `L̂ = L*·P̂` with `P̂ = det(2πnK0'')^{−1/2}`.
    Saddlepoint,
    /// `L̂* = L*`, omitting the P-factor.
    ZerothOrder,
    /// Gaussian `N(nK0'(0), nK0''(0))` density.
    NormalApprox,
}

impl ApproximationKind {
    pub const ALL: [ApproximationKind; 4] = [
        ApproximationKind::Exact,
        ApproximationKind::Saddlepoint,
        ApproximationKind::ZerothOrder,
        ApproximationKind::NormalApprox,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ApproximationKind::Exact => "exact",
            ApproximationKind::Saddlepoint => "spa",
            ApproximationKind::ZerothOrder => "zeroth",
            ApproximationKind::NormalApprox => "normal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Some(ApproximationKind::Exact),
            "spa" | "saddlepoint" => Some(ApproximationKind::Saddlepoint),
            "zeroth" | "zerothorder" | "zeroth_order" | "zeroth-order" => Some(ApproximationKind::ZerothOrder),
            "normal" | "normalapprox" | "normal_approx" | "normal-approx" => Some(ApproximationKind::NormalApprox),
            _ => None,
        }
    }
}

/// An observed `n`-fold sum `x`, with implied mean `y = x/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: DVector<f64>,
    pub n: f64,
}

impl Observation {
    pub fn new(x: DVector<f64>, n: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(SaddleError::InvalidInput(format!("n must be positive, got {n}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SaddleError::InvalidInput("x must be finite".into()));
        }
        Ok(Self { x, n })
    }

    pub fn from_mean(y: DVector<f64>, n: f64) -> Result<Self> {
        Self::new(y * n, n)
    }

    pub fn y(&self) -> DVector<f64> {
        &self.x / self.n
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone)]
pub struct FactoredLogLikelihood {
    /// `n(K0(ŝ) − ŝy)`; zero when no saddlepoint is available for `NormalApprox`.
    pub log_lstar: f64,
    pub log_p: f64,
    pub kind: ApproximationKind,
    pub saddle: Option<SaddleResult>,
    pub total: f64,
}

/// `K0(s) − s·K0'(s)`.
pub fn log_lstar0(model: &dyn CgfModel, theta: &DVector<f64>, s: &DVector<f64>) -> Result<f64> {
    let e = eval(model, s, theta, &[Block::K0, Block::GradS], FdPolicy::Deny)?;
    Ok(e.k0.unwrap() - s.dot(e.grad_s.as_ref().unwrap()))
}

fn check_obs(model: &dyn CgfModel, theta: &DVector<f64>, obs: &Observation) -> Result<()> {
    let sig = model.signature();
    if obs.dim() != sig.m {
        return Err(SaddleError::InvalidInput(format!("observation has dimension {}, model expects {}", obs.dim(), sig.m)));
    }
    if theta.len() != sig.p || !model.theta_in_domain(theta) {
        return Err(SaddleError::Domain(format!("theta {:?} outside parameter domain", theta.as_slice())));
    }
    Ok(())
}

/// `−½ log det(2πnK0'')`.
fn log_p_hat(n: f64, hess: &nalgebra::DMatrix<f64>) -> Result<f64> {
    let m = hess.nrows() as f64;
    let f = SpdFactor::new(hess)?;
    Ok(-0.5 * (m * (2.0 * std::f64::consts::PI * n).ln() + f.log_det()))
}

fn normal_moments(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    n: f64,
    with_derivs: bool,
) -> Result<(DVector<f64>, nalgebra::DMatrix<f64>, Option<(nalgebra::DMatrix<f64>, Vec<nalgebra::DMatrix<f64>>)>)> {
    let zero = DVector::zeros(model.signature().m);
    if !model.s_in_domain(&zero, theta) {
        return Err(SaddleError::Domain("normal approximation needs 0 in the interior of S_theta".into()));
    }
    let blocks: &[Block] = if with_derivs {
        &[Block::GradS, Block::HessS, Block::Cross, Block::DHessDTheta]
    } else {
        &[Block::GradS, Block::HessS]
    };
    let e = eval(model, &zero, theta, blocks, FdPolicy::Allow)?;
    let mean = e.grad_s.unwrap() * n;
    let cov = e.hess_s.unwrap() * n;
    let derivs = if with_derivs {
        Some((e.cross.unwrap() * n, e.dhess_dtheta.unwrap().into_iter().map(|d| d * n).collect()))
    } else {
        None
    };
    Ok((mean, cov, derivs))
}

/// Log-likelihood of `θ` given `obs` under the chosen approximation.
pub fn log_likelihood(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    obs: &Observation,
    kind: ApproximationKind,
    quad: &QuadratureConfig,
) -> Result<FactoredLogLikelihood> {
    check_obs(model, theta, obs)?;
    let n = obs.n;
    let y = obs.y();
    if kind == ApproximationKind::NormalApprox {
        let (mean, cov, _) = normal_moments(model, theta, n, false)?;
        let total = gaussian_logpdf(&obs.x, &mean, &cov)?;
        let saddle = solve_saddlepoint(model, theta, &y, &SolverConfig::default()).ok();
        let log_lstar = match &saddle {
            Some(sr) => n * (model.k0(&sr.s_hat, theta) - sr.s_hat.dot(&y)),
            None => 0.0,
        };
        return Ok(FactoredLogLikelihood { log_lstar, log_p: total - log_lstar, kind, saddle, total });
    }
    let sr = solve_saddlepoint(model, theta, &y, &SolverConfig::default())?;
    let log_lstar = n * (model.k0(&sr.s_hat, theta) - sr.s_hat.dot(&y));
    let log_p = match kind {
        ApproximationKind::ZerothOrder => 0.0,
        ApproximationKind::Saddlepoint => log_p_hat(n, &sr.hess_at_saddle)?,
        ApproximationKind::Exact => p_factor(model, theta, &sr.s_hat, n, quad, false, false)?.p.ln(),
        ApproximationKind::NormalApprox => unreachable!(),
    };
    Ok(FactoredLogLikelihood { log_lstar, log_p, kind, saddle: Some(sr), total: log_lstar + log_p })
}

/// θ-gradient of [`log_likelihood`]'s total.
pub fn grad_log_likelihood(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    obs: &Observation,
    kind: ApproximationKind,
    quad: &QuadratureConfig,
) -> Result<DVector<f64>> {
    check_obs(model, theta, obs)?;
    let n = obs.n;
    let y = obs.y();
    if kind == ApproximationKind::NormalApprox {
        let (mean, cov, derivs) = normal_moments(model, theta, n, true)?;
        let (dmean, dcov) = derivs.unwrap();
        return gaussian_logpdf_grad(&obs.x, &mean, &cov, &dmean, &dcov);
    }
    let sr = solve_saddlepoint(model, theta, &y, &SolverConfig::default())?;
    let s = &sr.s_hat;
    match kind {
        ApproximationKind::ZerothOrder => {
            let e = eval(model, s, theta, &[Block::GradTheta], FdPolicy::Allow)?;
            Ok(e.grad_theta.unwrap() * n)
        }
        ApproximationKind::Saddlepoint => {
            let e = eval(model, s, theta, &[Block::GradTheta, Block::ThirdS, Block::DHessDTheta], FdPolicy::Allow)?;
            let factor = SpdFactor::new(&sr.hess_at_saddle)?;
            let third = e.third_s.unwrap();
            let dh = e.dhess_dtheta.unwrap();
            let mut g = e.grad_theta.unwrap() * n;
            for j in 0..g.len() {
                let mut total = dh[j].clone();
                for (k, t) in third.iter().enumerate() {
                    total += t * sr.sens_theta[(k, j)];
                }
                g[j] -= 0.5 * factor.solve_mat(&total).trace();
            }
            Ok(g)
        }
        ApproximationKind::Exact => {
            if model.capabilities().has_complex_mgf
                && model.complex_grad_theta(s, &DVector::zeros(s.len()), theta).is_some()
            {
                let q = p_factor(model, theta, s, n, quad, true, true)?;
                let e = eval(model, s, theta, &[Block::GradTheta], FdPolicy::Allow)?;
                let through_s = sr.sens_theta.transpose() * q.dlogp_ds.unwrap();
                Ok(e.grad_theta.unwrap() * n + q.dlogp_dtheta.unwrap() + through_s)
            } else {
                fd_grad_total(model, theta, obs, kind, quad)
            }
        }
        ApproximationKind::NormalApprox => unreachable!(),
    }
}

/// Central finite differences of the total log-likelihood, step `max(1e-6, 1e-6·|θ_j|)`.
pub fn fd_grad_total(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    obs: &Observation,
    kind: ApproximationKind,
    quad: &QuadratureConfig,
) -> Result<DVector<f64>> {
    let p = theta.len();
    let mut g = DVector::zeros(p);
    for j in 0..p {
        let h = 1e-6f64.max(1e-6 * theta[j].abs());
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        let fp = log_likelihood(model, &tp, obs, kind, quad)?.total;
        let fm = log_likelihood(model, &tm, obs, kind, quad)?.total;
        g[j] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}
