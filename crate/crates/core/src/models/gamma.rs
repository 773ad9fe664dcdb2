use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, Gamma};

use super::{scalar_mat, scalar_vec};
use crate::cgf::{Capabilities, CgfModel, ComplexCgf, ModelSignature, SupportKind};
use crate::special::{digamma, ln_gamma};

/// How θ maps onto the shape `α` and rate `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaVariant {
    /// θ = (α, r).
    FreeAlphaR,
    /// α = θ, r = 1.
    Fi,
    /// α = r = θ.
    Pi,
}

/// Gamma summands: `K0(s) = α log r − α log(r − s)` on `s < r`.
#[derive(Debug, Clone, Copy)]
pub struct GammaModel {
    pub variant: GammaVariant,
}

impl GammaModel {
    pub fn new(variant: GammaVariant) -> Self {
        Self { variant }
    }

    pub fn free() -> Self {
        Self::new(GammaVariant::FreeAlphaR)
    }

    pub fn fi() -> Self {
        Self::new(GammaVariant::Fi)
    }

    pub fn pi() -> Self {
        Self::new(GammaVariant::Pi)
    }

    /// `(α, r)` for a parameter vector.
    pub fn shape_rate(&self, theta: &DVector<f64>) -> (f64, f64) {
        match self.variant {
            GammaVariant::FreeAlphaR => (theta[0], theta[1]),
            GammaVariant::Fi => (theta[0], 1.0),
            GammaVariant::Pi => (theta[0], theta[0]),
        }
    }

    /// Jacobian `∂(α, r)/∂θ`, a 2 × p matrix; the map is linear in every variant.
    fn jac(&self) -> DMatrix<f64> {
        match self.variant {
            GammaVariant::FreeAlphaR => DMatrix::identity(2, 2),
            GammaVariant::Fi => DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            GammaVariant::Pi => DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        }
    }
}

impl CgfModel for GammaModel {
    fn signature(&self) -> ModelSignature {
        let p = if self.variant == GammaVariant::FreeAlphaR { 2 } else { 1 };
        ModelSignature { m: 1, p, support_kind: SupportKind::Continuous }
    }

    fn name(&self) -> String {
        match self.variant {
            GammaVariant::FreeAlphaR => "gamma".into(),
            GammaVariant::Fi => "gamma-fi".into(),
            GammaVariant::Pi => "gamma-pi".into(),
        }
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
        let (a, r) = self.shape_rate(theta);
        a > 0.0 && r > 0.0 && a.is_finite() && r.is_finite()
    }

    fn s_in_domain(&self, s: &DVector<f64>, theta: &DVector<f64>) -> bool {
        s[0] < self.shape_rate(theta).1
    }

    fn dual_box(&self, theta: &DVector<f64>) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, self.shape_rate(theta).1)]
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let (a, r) = self.shape_rate(theta);
        -a * (-s[0] / r).ln_1p()
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let (a, r) = self.shape_rate(theta);
        scalar_vec(a / (r - s[0]))
    }

    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let (a, r) = self.shape_rate(theta);
        let u = r - s[0];
        scalar_mat(a / (u * u))
    }

    fn third_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let (a, r) = self.shape_rate(theta);
        let u = r - s[0];
        Some(vec![scalar_mat(2.0 * a / (u * u * u))])
    }

    fn grad_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let (a, r) = self.shape_rate(theta);
        let u = r - s[0];
        let g = DVector::from_vec(vec![-(-s[0] / r).ln_1p(), a / r - a / u]);
        Some(self.jac().transpose() * g)
    }

    fn cross(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (a, r) = self.shape_rate(theta);
        let u = r - s[0];
        let c = DMatrix::from_row_slice(1, 2, &[1.0 / u, -a / (u * u)]);
        Some(c * self.jac())
    }

    fn hess_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (a, r) = self.shape_rate(theta);
        let u = r - s[0];
        let ar = 1.0 / r - 1.0 / u;
        let rr = -a / (r * r) + a / (u * u);
        let h = DMatrix::from_row_slice(2, 2, &[0.0, ar, ar, rr]);
        let j = self.jac();
        Some(j.transpose() * h * j)
    }

    fn dhess_dtheta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let (a, r) = self.shape_rate(theta);
        let u = r - s[0];
        let d = [1.0 / (u * u), -2.0 * a / (u * u * u)];
        let j = self.jac();
        Some(
            (0..j.ncols())
                .map(|c| scalar_mat(d[0] * j[(0, c)] + d[1] * j[(1, c)]))
                .collect(),
        )
    }

    fn d2hess_dtheta2(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Vec<DMatrix<f64>>>> {
        let (a, r) = self.shape_rate(theta);
        let u = r - s[0];
        let ar = -2.0 / (u * u * u);
        let rr = 6.0 * a / (u * u * u * u);
        let h = DMatrix::from_row_slice(2, 2, &[0.0, ar, ar, rr]);
        let j = self.jac();
        let hp = j.transpose() * h * &j;
        let p = j.ncols();
        Some((0..p).map(|i| (0..p).map(|k| scalar_mat(hp[(i, k)])).collect()).collect())
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let (a, r) = self.shape_rate(theta);
        let z = Complex64::new(s[0], phi[0]);
        let u = r - z;
        Some((a * (r.ln() - u.ln()), vec![a / u]))
    }

    fn complex_grad_theta(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Complex64>> {
        let (a, r) = self.shape_rate(theta);
        let u = r - Complex64::new(s[0], phi[0]);
        let ga = r.ln() - u.ln();
        let gr = a / r - a / u;
        let j = self.jac();
        Some((0..j.ncols()).map(|c| ga * j[(0, c)] + gr * j[(1, c)]).collect())
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        let (a, r) = self.shape_rate(theta);
        let shape = n * a;
        let x = x[0];
        if x <= 0.0 {
            return Some(f64::NEG_INFINITY);
        }
        Some(shape * r.ln() + (shape - 1.0) * x.ln() - r * x - ln_gamma(shape))
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        let (a, r) = self.shape_rate(theta);
        let shape = n * a;
        let x = x[0];
        let g = DVector::from_vec(vec![n * r.ln() + n * x.ln() - n * digamma(shape), shape / r - x]);
        Some(self.jac().transpose() * g)
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let (a, r) = self.shape_rate(theta);
        let d = Gamma::new(n * a, 1.0 / r).ok()?;
        Some(scalar_vec(d.sample(rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_value_at_half() {
        let g = GammaModel::free();
        let th = DVector::from_vec(vec![2.0, 1.0]);
        let k = g.k0(&scalar_vec(0.5), &th);
        assert!((k - (-2.0 * 0.5f64.ln())).abs() < 1e-14);
        assert!((g.grad_s(&scalar_vec(0.5), &th)[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn density_value() {
        // Gamma(shape 4, rate 1) at 3: 3 log 3 − 3 − log 6.
        let g = GammaModel::fi();
        let v = g.closed_form_log_density(&scalar_vec(4.0), &scalar_vec(3.0), 1.0).unwrap();
        assert!((v - (3.0 * 3f64.ln() - 3.0 - 6f64.ln())).abs() < 1e-13);
    }

    #[test]
    fn pi_variant_has_unit_mean() {
        let g = GammaModel::pi();
        for th in [0.3, 1.0, 7.0] {
            assert!((g.grad_s(&scalar_vec(0.0), &scalar_vec(th))[0] - 1.0).abs() < 1e-15);
        }
    }
}
