use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, Poisson};

use super::{scalar_mat, scalar_vec};
use crate::cgf::{Capabilities, CgfModel, ComplexCgf, ModelSignature, SupportKind};
use crate::special::ln_factorial;

/// Poisson summands with rate `θ`: `K0(s) = θ(e^s − 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoissonModel;

impl CgfModel for PoissonModel {
    fn signature(&self) -> ModelSignature {
        ModelSignature { m: 1, p: 1, support_kind: SupportKind::IntegerLattice }
    }

    fn name(&self) -> String {
        "poisson".into()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_analytic_theta_derivs: true,
            has_complex_mgf: true,
            has_second_nu_derivs: true,
            has_closed_form_likelihood: true,
        }
    }

    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool {
        theta[0] > 0.0 && theta[0].is_finite()
    }

    fn s_in_domain(&self, s: &DVector<f64>, _theta: &DVector<f64>) -> bool {
        s[0].is_finite()
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        theta[0] * s[0].exp_m1()
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        scalar_vec(theta[0] * s[0].exp())
    }

    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        scalar_mat(theta[0] * s[0].exp())
    }

    fn third_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![scalar_mat(theta[0] * s[0].exp())])
    }

    fn grad_theta(&self, s: &DVector<f64>, _theta: &DVector<f64>) -> Option<DVector<f64>> {
        Some(scalar_vec(s[0].exp_m1()))
    }

    fn cross(&self, s: &DVector<f64>, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(scalar_mat(s[0].exp()))
    }

    fn hess_theta(&self, _s: &DVector<f64>, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(scalar_mat(0.0))
    }

    fn dhess_dtheta(&self, s: &DVector<f64>, _theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![scalar_mat(s[0].exp())])
    }

    fn d2hess_dtheta2(&self, _s: &DVector<f64>, _theta: &DVector<f64>) -> Option<Vec<Vec<DMatrix<f64>>>> {
        Some(vec![vec![scalar_mat(0.0)]])
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let ez = Complex64::new(s[0], phi[0]).exp();
        Some((theta[0] * (ez - 1.0), vec![theta[0] * ez]))
    }

    fn complex_grad_theta(&self, s: &DVector<f64>, phi: &DVector<f64>, _theta: &DVector<f64>) -> Option<Vec<Complex64>> {
        Some(vec![Complex64::new(s[0], phi[0]).exp() - 1.0])
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        let mean = n * theta[0];
        let k = x[0];
        if k < 0.0 {
            return Some(f64::NEG_INFINITY);
        }
        Some(k * mean.ln() - mean - ln_factorial(k))
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        Some(scalar_vec(x[0] / theta[0] - n))
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let d = Poisson::new(n * theta[0]).ok()?;
        Some(scalar_vec(d.sample(rng)))
    }
}
