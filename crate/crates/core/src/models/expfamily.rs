use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::integer_count;
use crate::cgf::{Capabilities, CgfModel, ComplexCgf, ModelSignature, SupportKind};
use crate::special::ln_gamma;

/// An exponential family `K0(s; θ) = ρ(η(θ) + s) − ρ(η(θ))` described by its
/// log-partition function `ρ` and natural-parameter map `η`.
///
/// Derivative tensors of `ρ` are indexed so that `rho_third(η)[c][(a, b)] = ∂³ρ/∂η_a∂η_b∂η_c`
/// and `rho_fourth(η)[c][d][(a, b)]` likewise.
pub trait ExpFamilyAdapter: Send + Sync {
    fn name(&self) -> String;
    fn m(&self) -> usize;
    fn p(&self) -> usize;
    fn support_kind(&self) -> SupportKind {
        SupportKind::Continuous
    }
    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool;

    fn natural(&self, theta: &DVector<f64>) -> DVector<f64>;
    /// `∂η/∂θ`, an m × p matrix.
    fn natural_jac(&self, theta: &DVector<f64>) -> DMatrix<f64>;
    /// Hessian of each natural-parameter component, p × p.
    fn natural_hess(&self, theta: &DVector<f64>) -> Vec<DMatrix<f64>>;
    fn inverse_natural(&self, _eta: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn eta_in_domain(&self, eta: &DVector<f64>) -> bool;
    /// Per-coordinate open box containing the natural domain.
    fn eta_box(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); self.m()]
    }

    fn rho(&self, eta: &DVector<f64>) -> f64;
    fn rho_grad(&self, eta: &DVector<f64>) -> DVector<f64>;
    fn rho_hess(&self, eta: &DVector<f64>) -> DMatrix<f64>;
    fn rho_third(&self, eta: &DVector<f64>) -> Vec<DMatrix<f64>>;
    fn rho_fourth(&self, eta: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>>;
    /// `ρ` and `ρ'` at a complex natural parameter `re + i·im`.
    fn rho_complex(&self, _re: &DVector<f64>, _im: &DVector<f64>) -> Option<(Complex64, Vec<Complex64>)> {
        None
    }
    fn has_complex(&self) -> bool {
        false
    }
    fn has_closed_form(&self) -> bool {
        false
    }

    fn closed_form_log_density(&self, _theta: &DVector<f64>, _x: &DVector<f64>, _n: f64) -> Option<f64> {
        None
    }
    fn closed_form_grad(&self, _theta: &DVector<f64>, _x: &DVector<f64>, _n: f64) -> Option<DVector<f64>> {
        None
    }
    fn sample(&self, _theta: &DVector<f64>, _n: f64, _rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        None
    }
}

/// A [`CgfModel`] built from an exponential family.
#[derive(Debug, Clone, Default)]
pub struct ExpFamilyModel<F> {
    pub family: F,
}

impl<F: ExpFamilyAdapter> ExpFamilyModel<F> {
    pub fn new(family: F) -> Self {
        Self { family }
    }
}

impl<F: ExpFamilyAdapter> CgfModel for ExpFamilyModel<F> {
    fn signature(&self) -> ModelSignature {
        ModelSignature { m: self.family.m(), p: self.family.p(), support_kind: self.family.support_kind() }
    }

    fn name(&self) -> String {
        self.family.name()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_analytic_theta_derivs: true,
            has_complex_mgf: self.family.has_complex(),
            has_second_nu_derivs: true,
            has_closed_form_likelihood: self.family.has_closed_form(),
        }
    }

    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool {
        self.family.theta_in_domain(theta)
    }

    fn s_in_domain(&self, s: &DVector<f64>, theta: &DVector<f64>) -> bool {
        self.family.eta_in_domain(&(self.family.natural(theta) + s))
    }

    fn dual_box(&self, theta: &DVector<f64>) -> Vec<(f64, f64)> {
        let eta = self.family.natural(theta);
        self.family
            .eta_box()
            .into_iter()
            .enumerate()
            .map(|(i, (lo, hi))| (lo - eta[i], hi - eta[i]))
            .collect()
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let eta = self.family.natural(theta);
        self.family.rho(&(&eta + s)) - self.family.rho(&eta)
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        self.family.rho_grad(&(self.family.natural(theta) + s))
    }

    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        self.family.rho_hess(&(self.family.natural(theta) + s))
    }

    fn third_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(self.family.rho_third(&(self.family.natural(theta) + s)))
    }

    fn grad_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let eta = self.family.natural(theta);
        let diff = self.family.rho_grad(&(&eta + s)) - self.family.rho_grad(&eta);
        Some(self.family.natural_jac(theta).transpose() * diff)
    }

    fn cross(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.family.rho_hess(&(self.family.natural(theta) + s)) * self.family.natural_jac(theta))
    }

    fn hess_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let eta = self.family.natural(theta);
        let u = &eta + s;
        let j = self.family.natural_jac(theta);
        let dh = self.family.rho_hess(&u) - self.family.rho_hess(&eta);
        let dg = self.family.rho_grad(&u) - self.family.rho_grad(&eta);
        let mut h = j.transpose() * dh * &j;
        for (a, ha) in self.family.natural_hess(theta).iter().enumerate() {
            h += ha * dg[a];
        }
        Some(h)
    }

    fn dhess_dtheta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let u = self.family.natural(theta) + s;
        let t3 = self.family.rho_third(&u);
        let j = self.family.natural_jac(theta);
        let m = self.family.m();
        Some(
            (0..self.family.p())
                .map(|col| {
                    let mut acc = DMatrix::zeros(m, m);
                    for (c, t) in t3.iter().enumerate() {
                        acc += t * j[(c, col)];
                    }
                    acc
                })
                .collect(),
        )
    }

    fn d2hess_dtheta2(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Vec<DMatrix<f64>>>> {
        let u = self.family.natural(theta) + s;
        let t3 = self.family.rho_third(&u);
        let t4 = self.family.rho_fourth(&u);
        let j = self.family.natural_jac(theta);
        let he = self.family.natural_hess(theta);
        let (m, p) = (self.family.m(), self.family.p());
        let mut grid = vec![vec![DMatrix::zeros(m, m); p]; p];
        for (i, row) in grid.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                for c in 0..m {
                    for d in 0..m {
                        *cell += &t4[c][d] * (j[(c, i)] * j[(d, k)]);
                    }
                    *cell += &t3[c] * he[c][(i, k)];
                }
            }
        }
        Some(grid)
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let eta = self.family.natural(theta);
        let (v, g) = self.family.rho_complex(&(&eta + s), phi)?;
        Some((v - self.family.rho(&eta), g))
    }

    fn complex_grad_theta(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Complex64>> {
        let eta = self.family.natural(theta);
        let (_, g) = self.family.rho_complex(&(&eta + s), phi)?;
        let g0 = self.family.rho_grad(&eta);
        let j = self.family.natural_jac(theta);
        Some(
            (0..self.family.p())
                .map(|col| (0..self.family.m()).map(|a| (g[a] - g0[a]) * j[(a, col)]).sum())
                .collect(),
        )
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        self.family.closed_form_log_density(theta, x, n)
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        self.family.closed_form_grad(theta, x, n)
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        self.family.sample(theta, n, rng)
    }
}

/// Poisson in natural coordinates: θ = λ, η = log λ, ρ(η) = e^η.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoissonNatural;

impl ExpFamilyAdapter for PoissonNatural {
    fn name(&self) -> String {
        "poisson-natural".into()
    }
    fn m(&self) -> usize {
        1
    }
    fn p(&self) -> usize {
        1
    }
    fn support_kind(&self) -> SupportKind {
        SupportKind::IntegerLattice
    }
    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool {
        theta[0] > 0.0 && theta[0].is_finite()
    }
    fn natural(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, theta[0].ln())
    }
    fn natural_jac(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 / theta[0])
    }
    fn natural_hess(&self, theta: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::from_element(1, 1, -1.0 / (theta[0] * theta[0]))]
    }
    fn inverse_natural(&self, eta: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, eta[0].exp()))
    }
    fn eta_in_domain(&self, eta: &DVector<f64>) -> bool {
        eta[0].is_finite()
    }
    fn rho(&self, eta: &DVector<f64>) -> f64 {
        eta[0].exp()
    }
    fn rho_grad(&self, eta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, eta[0].exp())
    }
    fn rho_hess(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, eta[0].exp())
    }
    fn rho_third(&self, eta: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::from_element(1, 1, eta[0].exp())]
    }
    fn rho_fourth(&self, eta: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        vec![vec![DMatrix::from_element(1, 1, eta[0].exp())]]
    }
    fn has_complex(&self) -> bool {
        true
    }
    fn rho_complex(&self, re: &DVector<f64>, im: &DVector<f64>) -> Option<(Complex64, Vec<Complex64>)> {
        let e = Complex64::new(re[0], im[0]).exp();
        Some((e, vec![e]))
    }
}

/// Bivariate statistic `(Z, Z²)` of a normal sample with θ = (μ, σ²):
/// η = (μ/σ², −1/(2σ²)), `ρ(η) = η₁²/(−4η₂) − ½ log(−η₂)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalSquareFamily;

/// Normal-with-square model: summands `(Z, Z²)` with `Z ~ N(μ, σ²)`.
pub type NormalWithSquareModel = ExpFamilyModel<NormalSquareFamily>;

impl NormalWithSquareModel {
    pub fn normal_with_square() -> Self {
        ExpFamilyModel::new(NormalSquareFamily)
    }
}

impl ExpFamilyAdapter for NormalSquareFamily {
    fn name(&self) -> String {
        "normal-square".into()
    }
    fn m(&self) -> usize {
        2
    }
    fn p(&self) -> usize {
        2
    }
    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool {
        theta[0].is_finite() && theta[1] > 0.0 && theta[1].is_finite()
    }
    fn natural(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![theta[0] / theta[1], -0.5 / theta[1]])
    }
    fn natural_jac(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let (mu, v) = (theta[0], theta[1]);
        DMatrix::from_row_slice(2, 2, &[1.0 / v, -mu / (v * v), 0.0, 0.5 / (v * v)])
    }
    fn natural_hess(&self, theta: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let (mu, v) = (theta[0], theta[1]);
        let v2 = v * v;
        let v3 = v2 * v;
        vec![
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0 / v2, -1.0 / v2, 2.0 * mu / v3]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0 / v3]),
        ]
    }
    fn inverse_natural(&self, eta: &DVector<f64>) -> Option<DVector<f64>> {
        if eta[1] >= 0.0 {
            return None;
        }
        let v = -0.5 / eta[1];
        Some(DVector::from_vec(vec![eta[0] * v, v]))
    }
    fn eta_in_domain(&self, eta: &DVector<f64>) -> bool {
        eta[0].is_finite() && eta[1] < 0.0
    }
    fn eta_box(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY), (f64::NEG_INFINITY, 0.0)]
    }
    fn rho(&self, eta: &DVector<f64>) -> f64 {
        let (a, b) = (eta[0], eta[1]);
        -a * a / (4.0 * b) - 0.5 * (-b).ln()
    }
    fn rho_grad(&self, eta: &DVector<f64>) -> DVector<f64> {
        let (a, b) = (eta[0], eta[1]);
        DVector::from_vec(vec![-a / (2.0 * b), a * a / (4.0 * b * b) - 0.5 / b])
    }
    fn rho_hess(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = (eta[0], eta[1]);
        let b2 = b * b;
        let ab = a / (2.0 * b2);
        DMatrix::from_row_slice(2, 2, &[-0.5 / b, ab, ab, -a * a / (2.0 * b2 * b) + 0.5 / b2])
    }
    fn rho_third(&self, eta: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let (a, b) = (eta[0], eta[1]);
        let b2 = b * b;
        let b3 = b2 * b;
        let aab = 0.5 / b2;
        let abb = -a / b3;
        let bbb = 1.5 * a * a / (b3 * b) - 1.0 / b3;
        vec![
            DMatrix::from_row_slice(2, 2, &[0.0, aab, aab, abb]),
            DMatrix::from_row_slice(2, 2, &[aab, abb, abb, bbb]),
        ]
    }
    fn rho_fourth(&self, eta: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        let (a, b) = (eta[0], eta[1]);
        let b3 = b * b * b;
        let b4 = b3 * b;
        let aabb = -1.0 / b3;
        let abbb = 3.0 * a / b4;
        let bbbb = -6.0 * a * a / (b4 * b) + 3.0 / b4;
        let t_aa = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, aabb]);
        let t_ab = DMatrix::from_row_slice(2, 2, &[0.0, aabb, aabb, abbb]);
        let t_bb = DMatrix::from_row_slice(2, 2, &[aabb, abbb, abbb, bbbb]);
        vec![vec![t_aa, t_ab.clone()], vec![t_ab, t_bb]]
    }
    fn has_complex(&self) -> bool {
        true
    }
    fn has_closed_form(&self) -> bool {
        true
    }
    fn rho_complex(&self, re: &DVector<f64>, im: &DVector<f64>) -> Option<(Complex64, Vec<Complex64>)> {
        let a = Complex64::new(re[0], im[0]);
        let b = Complex64::new(re[1], im[1]);
        let v = -a * a / (4.0 * b) - 0.5 * (-b).ln();
        Some((v, vec![-a / (2.0 * b), a * a / (4.0 * b * b) - 0.5 / b]))
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        if n <= 1.0 {
            return None;
        }
        let (mu, v) = (theta[0], theta[1]);
        let w = x[1] - x[0] * x[0] / n;
        if w <= 0.0 {
            return Some(f64::NEG_INFINITY);
        }
        let d = x[0] - n * mu;
        let normal_part = -d * d / (2.0 * n * v) - 0.5 * (2.0 * std::f64::consts::PI * n * v).ln();
        let k = 0.5 * (n - 1.0);
        let gamma_part = (k - 1.0) * (w / (2.0 * v)).ln() - w / (2.0 * v) - (2.0 * v).ln() - ln_gamma(k);
        Some(normal_part + gamma_part)
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        if n <= 1.0 {
            return None;
        }
        let (mu, v) = (theta[0], theta[1]);
        let w = x[1] - x[0] * x[0] / n;
        let d = x[0] - n * mu;
        let k = 0.5 * (n - 1.0);
        let g_mu = d / v;
        let g_v = d * d / (2.0 * n * v * v) - 0.5 / v - (k - 1.0) / v + w / (2.0 * v * v) - 1.0 / v;
        Some(DVector::from_vec(vec![g_mu, g_v]))
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let count = integer_count(n)?;
        let sd = theta[1].sqrt();
        let mut out = DVector::zeros(2);
        for _ in 0..count {
            let e: f64 = StandardNormal.sample(rng);
            let z = theta[0] + sd * e;
            out[0] += z;
            out[1] += z * z;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_square_mean_and_cov() {
        // E(Z, Z²) = (μ, μ² + σ²); Var Z = σ², Cov(Z, Z²) = 2μσ², Var Z² = 4μ²σ² + 2σ⁴.
        let model = NormalWithSquareModel::normal_with_square();
        let th = DVector::from_vec(vec![0.7, 1.3]);
        let s0 = DVector::zeros(2);
        let g = model.grad_s(&s0, &th);
        assert!((g[0] - 0.7).abs() < 1e-14);
        assert!((g[1] - (0.49 + 1.3)).abs() < 1e-14);
        let h = model.hess_s(&s0, &th);
        assert!((h[(0, 0)] - 1.3).abs() < 1e-14);
        assert!((h[(0, 1)] - 2.0 * 0.7 * 1.3).abs() < 1e-14);
        assert!((h[(1, 1)] - (4.0 * 0.49 * 1.3 + 2.0 * 1.69)).abs() < 1e-13);
    }

    #[test]
    fn inverse_natural_round_trip() {
        let f = NormalSquareFamily;
        let th = DVector::from_vec(vec![-0.4, 2.5]);
        let back = f.inverse_natural(&f.natural(&th)).unwrap();
        assert!((back - th).norm() < 1e-14);
    }
}
