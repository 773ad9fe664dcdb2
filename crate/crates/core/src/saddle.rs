//! Damped Newton solution of the saddlepoint equation `K0'(ŝ; θ) = y`.

use nalgebra::{DMatrix, DVector};

use crate::cgf::{eval, Block, CgfModel, FdPolicy};
use crate::error::{Result, SaddleError};
use crate::linalg::SpdFactor;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Tolerance on `‖K0'(ŝ) − y‖∞ / (1 + ‖y‖∞)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; defaults to `0`, or the model's hint when `0` is not interior.
    pub init: Option<DVector<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100, init: None }
    }
}

#[derive(Debug, Clone)]
pub struct SaddleResult {
    pub s_hat: DVector<f64>,
    /// `K0''(ŝ; θ)`.
    pub hess_at_saddle: DMatrix<f64>,
    /// `∇θŝᵀ = −K0''(ŝ)⁻¹ ∇s∇θK0(ŝ)`, m × p.
    pub sens_theta: DMatrix<f64>,
    /// `∇yŝᵀ = K0''(ŝ)⁻¹`.
    pub sens_y: DMatrix<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Whether the cross block came from finite differences.
    pub fd_cross: bool,
}

const MAX_HALVINGS: usize = 60;
const STEP_TOL: f64 = 1e-6;

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `K0'(ŝ; θ) = y` by Newton's method with step halving.
pub fn solve_saddlepoint(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SaddleResult> {
    let sig = model.signature();
    if y.len() != sig.m {
        return Err(SaddleError::InvalidInput(format!("y has length {}, expected {}", y.len(), sig.m)));
    }
    if theta.len() != sig.p || !model.theta_in_domain(theta) {
        return Err(SaddleError::Domain(format!("theta {:?} outside parameter domain", theta.as_slice())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SaddleError::InvalidInput("y must be finite".into()));
    }
    let mut s = match &cfg.init {
        Some(s0) => s0.clone(),
        None => DVector::zeros(sig.m),
    };
    if !model.s_in_domain(&s, theta) {
        s = model
            .start_hint(theta)
            .filter(|h| model.s_in_domain(h, theta))
            .ok_or_else(|| SaddleError::Domain("initial dual point not interior and no start hint".into()))?;
    }
    let target = cfg.tol * (1.0 + inf_norm(y));
    let mut f = model.grad_s(&s, theta) - y;
    let mut iterations = 0;
    loop {
        let r = inf_norm(&f);
        let h = model.hess_s(&s, theta);
        let factor = SpdFactor::new(&h).map_err(|_| SaddleError::NoSaddlepoint { residual: r, iterations })?;
        let delta = -factor.solve_vec(&f);
        // A small residual with a large Newton step means y sits on the boundary.
        if r <= target && inf_norm(&delta) <= STEP_TOL * (1.0 + inf_norm(&s)) {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(SaddleError::NoSaddlepoint { residual: r, iterations });
        }
        iterations += 1;
        let r2 = f.norm();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = &s + &delta * t;
            if model.s_in_domain(&trial, theta) {
                let ft = model.grad_s(&trial, theta) - y;
                if ft.iter().all(|v| v.is_finite()) && ft.norm() < r2 {
                    s = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(SaddleError::NoSaddlepoint { residual: r, iterations });
        }
    }
    let (sens_theta, sens_y, fd_cross, hess) = sensitivities(model, theta, &s)?;
    Ok(SaddleResult {
        s_hat: s,
        hess_at_saddle: hess,
        sens_theta,
        sens_y,
        residual_norm: inf_norm(&f),
        iterations,
        fd_cross,
    })
}

fn sensitivities(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    s_hat: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, bool, DMatrix<f64>)> {
    let e = eval(model, s_hat, theta, &[Block::HessS, Block::Cross], FdPolicy::Allow)?;
    let hess = e.hess_s.unwrap();
    let factor = SpdFactor::new(&hess)?;
    let sens_theta = -factor.solve_mat(e.cross.as_ref().unwrap());
    Ok((sens_theta, factor.inverse(), !e.fd_filled.is_empty(), hess))
}

/// `(∇θŝᵀ, ∇yŝᵀ)` at a known saddlepoint.
pub fn saddle_sensitivities(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    s_hat: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (st, sy, _, _) = sensitivities(model, theta, s_hat)?;
    Ok((st, sy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GammaModel, PoissonModel};

    #[test]
    fn poisson_closed_form() {
        let r = solve_saddlepoint(&PoissonModel, &DVector::from_element(1, 3.0), &DVector::from_element(1, 5.0), &SolverConfig::default()).unwrap();
        assert!((r.s_hat[0] - (5.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((r.sens_theta[(0, 0)] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_closed_form() {
        let th = DVector::from_vec(vec![2.0, 1.0]);
        let r = solve_saddlepoint(&GammaModel::free(), &th, &DVector::from_element(1, 4.0), &SolverConfig::default()).unwrap();
        assert!((r.s_hat[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mean_gives_zero() {
        let th = DVector::from_vec(vec![2.0, 1.0]);
        let r = solve_saddlepoint(&GammaModel::free(), &th, &DVector::from_element(1, 2.0), &SolverConfig::default()).unwrap();
        assert_eq!(r.s_hat[0], 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn outside_support_fails() {
        let r = solve_saddlepoint(&PoissonModel, &DVector::from_element(1, 3.0), &DVector::from_element(1, 0.0), &SolverConfig::default());
        assert!(matches!(r, Err(SaddleError::NoSaddlepoint { .. })));
    }
}
