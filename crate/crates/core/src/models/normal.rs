use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::cgf::{Capabilities, CgfModel, ComplexCgf, ModelSignature, SupportKind};
use crate::error::{Result, SaddleError};
use crate::linalg::{gaussian_logpdf, gaussian_logpdf_grad, spd_condition};

/// Parametrisation `θ ↦ (μ̃, Σ̃)` of a Gaussian summand.
#[derive(Debug, Clone)]
pub enum NormalParam {
    /// θ = μ̃ with fixed covariance.
    Mean { cov: DMatrix<f64> },
    /// θ = (μ̃, τ) with Σ̃ = e^τ·base.
    MeanLogScale { base: DMatrix<f64> },
    /// Univariate θ = (μ, σ²).
    MeanVariance,
}

/// Gaussian summands: `K0(s) = sμ̃ + ½ sΣ̃sᵀ`.
#[derive(Debug, Clone)]
pub struct NormalModel {
    param: NormalParam,
    m: usize,
}

impl NormalModel {
    pub fn new(param: NormalParam) -> Result<Self> {
        let m = match &param {
            NormalParam::Mean { cov } | NormalParam::MeanLogScale { base: cov } => {
                if cov.nrows() != cov.ncols() || cov.nrows() == 0 {
                    return Err(SaddleError::InvalidInput("covariance must be square".into()));
                }
                if !(spd_condition(cov) < 1e14) {
                    return Err(SaddleError::InvalidInput("covariance must be positive definite".into()));
                }
                cov.nrows()
            }
            NormalParam::MeanVariance => 1,
        };
        Ok(Self { param, m })
    }

    pub fn mean_only(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(NormalParam::Mean { cov })
    }

    pub fn mean_log_scale(base: DMatrix<f64>) -> Result<Self> {
        Self::new(NormalParam::MeanLogScale { base })
    }

    pub fn mean_variance() -> Self {
        Self { param: NormalParam::MeanVariance, m: 1 }
    }

    pub fn param(&self) -> &NormalParam {
        &self.param
    }

    fn p(&self) -> usize {
        match &self.param {
            NormalParam::Mean { .. } => self.m,
            NormalParam::MeanLogScale { .. } => self.m + 1,
            NormalParam::MeanVariance => 2,
        }
    }

    pub fn mean(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta.rows(0, self.m).into_owned()
    }

    pub fn cov(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        match &self.param {
            NormalParam::Mean { cov } => cov.clone(),
            NormalParam::MeanLogScale { base } => base * theta[self.m].exp(),
            NormalParam::MeanVariance => DMatrix::from_element(1, 1, theta[1]),
        }
    }

    /// `∂μ̃/∂θ`, constant.
    fn dmean(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.m, self.p());
        for i in 0..self.m {
            d[(i, i)] = 1.0;
        }
        d
    }

    fn dcov(&self, theta: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out = vec![DMatrix::zeros(self.m, self.m); self.p()];
        match &self.param {
            NormalParam::Mean { .. } => {}
            NormalParam::MeanLogScale { .. } => out[self.m] = self.cov(theta),
            NormalParam::MeanVariance => out[1] = DMatrix::from_element(1, 1, 1.0),
        }
        out
    }

    fn d2cov(&self, theta: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        let p = self.p();
        let mut out = vec![vec![DMatrix::zeros(self.m, self.m); p]; p];
        if let NormalParam::MeanLogScale { .. } = &self.param {
            out[self.m][self.m] = self.cov(theta);
        }
        out
    }
}

impl CgfModel for NormalModel {
    fn signature(&self) -> ModelSignature {
        ModelSignature { m: self.m, p: self.p(), support_kind: SupportKind::Continuous }
    }

    fn name(&self) -> String {
        match &self.param {
            NormalParam::Mean { .. } => "normal".into(),
            NormalParam::MeanLogScale { .. } => "normal-logscale".into(),
            NormalParam::MeanVariance => "normal-meanvar".into(),
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
        theta.iter().all(|v| v.is_finite())
            && match self.param {
                NormalParam::MeanVariance => theta[1] > 0.0,
                _ => true,
            }
    }

    fn s_in_domain(&self, s: &DVector<f64>, _theta: &DVector<f64>) -> bool {
        s.iter().all(|v| v.is_finite())
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        s.dot(&self.mean(theta)) + 0.5 * s.dot(&(self.cov(theta) * s))
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        self.mean(theta) + self.cov(theta) * s
    }

    fn hess_s(&self, _s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        self.cov(theta)
    }

    fn third_s(&self, _s: &DVector<f64>, _theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(self.m, self.m); self.m])
    }

    fn grad_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let dm = self.dmean();
        let dc = self.dcov(theta);
        Some(DVector::from_iterator(
            self.p(),
            (0..self.p()).map(|j| s.dot(&dm.column(j)) + 0.5 * s.dot(&(&dc[j] * s))),
        ))
    }

    fn cross(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut c = self.dmean();
        for (j, d) in self.dcov(theta).iter().enumerate() {
            let col = c.column(j) + d * s;
            c.set_column(j, &col);
        }
        Some(c)
    }

    fn hess_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let d2 = self.d2cov(theta);
        let p = self.p();
        Some(DMatrix::from_fn(p, p, |i, j| 0.5 * s.dot(&(&d2[i][j] * s))))
    }

    fn dhess_dtheta(&self, _s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(self.dcov(theta))
    }

    fn d2hess_dtheta2(&self, _s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Vec<DMatrix<f64>>>> {
        Some(self.d2cov(theta))
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let z: Vec<Complex64> = s.iter().zip(phi.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let mu = self.mean(theta);
        let cov = self.cov(theta);
        let m = self.m;
        let sz: Vec<Complex64> = (0..m)
            .map(|i| mu[i] + (0..m).map(|j| z[j] * cov[(i, j)]).sum::<Complex64>())
            .collect();
        let value: Complex64 = (0..m)
            .map(|i| z[i] * mu[i] + 0.5 * z[i] * (0..m).map(|j| z[j] * cov[(i, j)]).sum::<Complex64>())
            .sum();
        Some((value, sz))
    }

    fn complex_grad_theta(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Complex64>> {
        let z: Vec<Complex64> = s.iter().zip(phi.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let dm = self.dmean();
        let dc = self.dcov(theta);
        let m = self.m;
        Some(
            (0..self.p())
                .map(|j| {
                    let lin: Complex64 = (0..m).map(|i| z[i] * dm[(i, j)]).sum();
                    let quad: Complex64 = (0..m)
                        .map(|i| z[i] * (0..m).map(|k| z[k] * dc[j][(i, k)]).sum::<Complex64>())
                        .sum();
                    lin + 0.5 * quad
                })
                .collect(),
        )
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        gaussian_logpdf(x, &(self.mean(theta) * n), &(self.cov(theta) * n)).ok()
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        let dcov: Vec<DMatrix<f64>> = self.dcov(theta).into_iter().map(|d| d * n).collect();
        gaussian_logpdf_grad(x, &(self.mean(theta) * n), &(self.cov(theta) * n), &(self.dmean() * n), &dcov).ok()
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let chol = (self.cov(theta) * n).cholesky()?;
        let z = DVector::from_iterator(self.m, (0..self.m).map(|_| StandardNormal.sample(rng)));
        Some(self.mean(theta) * n + chol.l() * z)
    }
}
