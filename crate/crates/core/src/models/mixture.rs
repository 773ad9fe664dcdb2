use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use super::{integer_count, scalar_mat, scalar_vec};
use crate::cgf::{Capabilities, CgfModel, ComplexCgf, ModelSignature, SupportKind};
use crate::special::{ln_cosh, ln_gamma, log_sum_exp};

/// Largest convolution count for which the exact binomial-mixture density is summed.
pub const MIXTURE_EXACT_MAX_N: u64 = 64;

/// Summands `½e^{−θ²}Z + B` with `Z ~ N(0,1)` and `B = ±1` equiprobable:
/// `K0(s) = ⅛e^{−2θ²}s² + log cosh s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MixtureNormalModel;

fn e_of(theta: f64) -> (f64, f64, f64) {
    let e = (-2.0 * theta * theta).exp();
    (e, -4.0 * theta * e, (16.0 * theta * theta - 4.0) * e)
}

impl CgfModel for MixtureNormalModel {
    fn signature(&self) -> ModelSignature {
        ModelSignature { m: 1, p: 1, support_kind: SupportKind::Continuous }
    }

    fn name(&self) -> String {
        "mixture-normal".into()
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
        theta[0].is_finite()
    }

    fn s_in_domain(&self, s: &DVector<f64>, _theta: &DVector<f64>) -> bool {
        s[0].is_finite()
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let (e, _, _) = e_of(theta[0]);
        e * s[0] * s[0] / 8.0 + ln_cosh(s[0])
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let (e, _, _) = e_of(theta[0]);
        scalar_vec(e * s[0] / 4.0 + s[0].tanh())
    }

    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let (e, _, _) = e_of(theta[0]);
        let t = s[0].tanh();
        scalar_mat(e / 4.0 + 1.0 - t * t)
    }

    fn third_s(&self, s: &DVector<f64>, _theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let t = s[0].tanh();
        Some(vec![scalar_mat(-2.0 * (1.0 - t * t) * t)])
    }

    fn grad_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let (_, d1, _) = e_of(theta[0]);
        Some(scalar_vec(d1 * s[0] * s[0] / 8.0))
    }

    fn cross(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (_, d1, _) = e_of(theta[0]);
        Some(scalar_mat(d1 * s[0] / 4.0))
    }

    fn hess_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (_, _, d2) = e_of(theta[0]);
        Some(scalar_mat(d2 * s[0] * s[0] / 8.0))
    }

    fn dhess_dtheta(&self, _s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let (_, d1, _) = e_of(theta[0]);
        Some(vec![scalar_mat(d1 / 4.0)])
    }

    fn d2hess_dtheta2(&self, _s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Vec<DMatrix<f64>>>> {
        let (_, _, d2) = e_of(theta[0]);
        Some(vec![vec![scalar_mat(d2 / 4.0)]])
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let (e, _, _) = e_of(theta[0]);
        let z = Complex64::new(s[0], phi[0]);
        Some((e * z * z / 8.0 + z.cosh().ln(), vec![e * z / 4.0 + z.tanh()]))
    }

    fn complex_grad_theta(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Complex64>> {
        let (_, d1, _) = e_of(theta[0]);
        let z = Complex64::new(s[0], phi[0]);
        Some(vec![d1 * z * z / 8.0])
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        let count = integer_count(n).filter(|&c| c <= MIXTURE_EXACT_MAX_N)?;
        let (e, _, _) = e_of(theta[0]);
        let v = n * e / 4.0;
        let terms: Vec<f64> = (0..=count)
            .map(|k| {
                let k = k as f64;
                let log_w = ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0) - n * std::f64::consts::LN_2;
                let d = x[0] - (2.0 * k - n);
                log_w - d * d / (2.0 * v) - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
            })
            .collect();
        Some(log_sum_exp(&terms))
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        let count = integer_count(n).filter(|&c| c <= MIXTURE_EXACT_MAX_N)?;
        let (e, d1, _) = e_of(theta[0]);
        let v = n * e / 4.0;
        let dv = n * d1 / 4.0;
        let mut logs = Vec::with_capacity(count as usize + 1);
        let mut scores = Vec::with_capacity(count as usize + 1);
        for k in 0..=count {
            let k = k as f64;
            let log_w = ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0);
            let d = x[0] - (2.0 * k - n);
            logs.push(log_w - d * d / (2.0 * v));
            scores.push((d * d / (2.0 * v * v) - 0.5 / v) * dv);
        }
        let total = log_sum_exp(&logs);
        let g: f64 = logs.iter().zip(&scores).map(|(l, sc)| (l - total).exp() * sc).sum();
        Some(scalar_vec(g))
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let count = integer_count(n)?;
        let scale = 0.5 * (-theta[0] * theta[0]).exp();
        let coin = Bernoulli::new(0.5).ok()?;
        let mut total = 0.0;
        for _ in 0..count {
            let z: f64 = StandardNormal.sample(rng);
            total += scale * z + if coin.sample(rng) { 1.0 } else { -1.0 };
        }
        Some(scalar_vec(total))
    }
}
