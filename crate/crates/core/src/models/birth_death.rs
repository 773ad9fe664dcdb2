use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Bernoulli, Distribution, Geometric};

use super::{integer_count, scalar_mat, scalar_vec};
use crate::cgf::{Capabilities, CgfModel, ComplexCgf, ModelSignature, SupportKind};
use crate::error::{Result, SaddleError};

/// Threshold on `|ω|t` below which the removable singularity at ω = 0 is expanded.
const LIMIT_BRANCH: f64 = 1e-6;

/// `ω / (e^{ωt} − 1)`, extended continuously to `1/t` at ω = 0.
fn omega_over_expm1(omega: f64, t: f64) -> f64 {
    let x = omega * t;
    if x.abs() < LIMIT_BRANCH {
        (1.0 - x / 2.0 + x * x / 12.0) / t
    } else {
        omega / x.exp_m1()
    }
}

/// Modified-geometric parameters `(α, q)` of a linear birth-death population started
/// from one individual and observed after time `t`, with θ = (ω, ν) = (λ − μ, λ + μ).
pub fn birthdeath_alpha_q(omega: f64, nu: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0 && omega.is_finite() && nu.is_finite() && -nu < omega && omega < nu) {
        return Err(SaddleError::Domain(format!("birth-death requires -nu < omega < nu and t > 0 (omega={omega}, nu={nu}, t={t})")));
    }
    let lambda = 0.5 * (nu + omega);
    let mu = 0.5 * (nu - omega);
    let g = omega_over_expm1(omega, t);
    let denom = lambda + g;
    Ok((mu / denom, lambda / denom))
}

/// Population size after time `t` of a linear birth-death process from one individual;
/// the observation is the sum over `n` independent lineages.
#[derive(Debug, Clone, Copy)]
pub struct BirthDeathModel {
    pub t: f64,
}

impl BirthDeathModel {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(SaddleError::InvalidInput("t must be positive".into()));
        }
        Ok(Self { t })
    }

    fn aq(&self, theta: &DVector<f64>) -> (f64, f64) {
        birthdeath_alpha_q(theta[0], theta[1], self.t).expect("theta checked by caller")
    }
}

impl CgfModel for BirthDeathModel {
    fn signature(&self) -> ModelSignature {
        ModelSignature { m: 1, p: 2, support_kind: SupportKind::IntegerLattice }
    }

    fn name(&self) -> String {
        "birth-death".into()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_analytic_theta_derivs: false,
            has_complex_mgf: true,
            has_second_nu_derivs: false,
            has_closed_form_likelihood: false,
        }
    }

    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool {
        birthdeath_alpha_q(theta[0], theta[1], self.t).is_ok()
    }

    fn s_in_domain(&self, s: &DVector<f64>, theta: &DVector<f64>) -> bool {
        let (_, q) = self.aq(theta);
        s[0].is_finite() && s[0] < -q.ln()
    }

    fn dual_box(&self, theta: &DVector<f64>) -> Vec<(f64, f64)> {
        let (_, q) = self.aq(theta);
        vec![(f64::NEG_INFINITY, -q.ln())]
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let (a, q) = self.aq(theta);
        let u = s[0].exp();
        let c = 1.0 - q - a;
        (a + c * u).ln() - (-q * u).ln_1p()
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let (a, q) = self.aq(theta);
        let u = s[0].exp();
        let c = 1.0 - q - a;
        scalar_vec(c * u / (a + c * u) + q * u / (1.0 - q * u))
    }

    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let (a, q) = self.aq(theta);
        let u = s[0].exp();
        let c = 1.0 - q - a;
        let nn = a + c * u;
        let d = 1.0 - q * u;
        scalar_mat(a * c * u / (nn * nn) + q * u / (d * d))
    }

    fn third_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let (a, q) = self.aq(theta);
        let u = s[0].exp();
        let c = 1.0 - q - a;
        let nn = a + c * u;
        let d = 1.0 - q * u;
        Some(vec![scalar_mat(
            a * c * u * (a - c * u) / (nn * nn * nn) + q * u * (1.0 + q * u) / (d * d * d),
        )])
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let (a, q) = self.aq(theta);
        let u = Complex64::new(s[0], phi[0]).exp();
        let c = 1.0 - q - a;
        let nn = a + c * u;
        let d = 1.0 - q * u;
        Some((nn.ln() - d.ln(), vec![c * u / nn + q * u / d]))
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let count = integer_count(n)?;
        let (a, q) = self.aq(theta);
        let extinct = Bernoulli::new(a).ok()?;
        let geo = Geometric::new(1.0 - q).ok()?;
        let mut total = 0u64;
        for _ in 0..count {
            if !extinct.sample(rng) {
                total += 1 + geo.sample(rng);
            }
        }
        Some(scalar_vec(total as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_value() {
        // λ = 1, μ = 0.5 ⇒ ω = 0.5, ν = 1.5
        let (a, q) = birthdeath_alpha_q(0.5, 1.5, 1.0).unwrap();
        let e = 0.5f64.exp();
        assert!((a - 0.5 * (e - 1.0) / (e - 0.5)).abs() < 1e-15);
        assert!((q - (e - 1.0) / (e - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn limit_at_zero_growth() {
        let (a, q) = birthdeath_alpha_q(0.0, 2.0, 0.7).unwrap();
        let want = 0.7 / 1.7;
        assert!((a - want).abs() < 1e-15 && (q - want).abs() < 1e-15);
        for w in [1e-6 / 0.7 * 0.99, 1e-6 / 0.7 * 1.01, -1e-6 / 0.7 * 1.01] {
            let (a2, q2) = birthdeath_alpha_q(w, 2.0, 0.7).unwrap();
            assert!((a2 - want).abs() < 1e-6 && (q2 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_is_exponential_growth() {
        for &(w, nu, t) in &[(0.3, 1.0, 2.0), (-0.4, 0.9, 1.5), (0.0, 1.0, 1.0)] {
            let m = BirthDeathModel::new(t).unwrap();
            let th = DVector::from_vec(vec![w, nu]);
            let k = m.grad_s(&scalar_vec(0.0), &th)[0];
            assert!((k - (w * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_rates() {
        assert!(birthdeath_alpha_q(1.0, 0.5, 1.0).is_err());
    }
}
