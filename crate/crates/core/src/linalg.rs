//! Small dense linear-algebra helpers on nalgebra matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SaddleError};

/// Condition number threshold above which a symmetric matrix is treated as singular.
pub const SINGULAR_COND: f64 = 1e14;

/// Cholesky factor of a symmetric positive-definite matrix, with a conditioning check.
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    dim: usize,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let cond = spd_condition(a);
        if !cond.is_finite() || cond > SINGULAR_COND {
            return Err(SaddleError::SingularHessian { cond });
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or(SaddleError::SingularHessian { cond: f64::INFINITY })?;
        Ok(Self { chol, dim: a.nrows() })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..self.dim).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Ratio of largest to smallest eigenvalue; infinite if any eigenvalue is non-positive.
pub fn spd_condition(a: &DMatrix<f64>) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(symmetrize(a)).eigenvalues;
    let min = eig.min();
    let max = eig.max();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `a`.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(symmetrize(a)).eigenvalues
}

pub fn is_negative_definite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite()) && sym_eigenvalues(a).iter().all(|&e| e < 0.0)
}

/// Numerical rank from singular values relative to the largest.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > rel_tol * max).count()
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Log density of `N(mean, cov)` at `x`.
pub fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let f = SpdFactor::new(cov)?;
    let r = x - mean;
    let w = f.solve_vec(&r);
    let m = x.len() as f64;
    Ok(-0.5 * r.dot(&w) - 0.5 * (m * (2.0 * std::f64::consts::PI).ln() + f.log_det()))
}

/// θ-gradient of [`gaussian_logpdf`] given `∂mean/∂θ` (m × p) and `∂cov/∂θ_j`.
pub fn gaussian_logpdf_grad(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    dmean: &DMatrix<f64>,
    dcov: &[DMatrix<f64>],
) -> Result<DVector<f64>> {
    let f = SpdFactor::new(cov)?;
    let w = f.solve_vec(&(x - mean));
    let p = dmean.ncols();
    let mut g = DVector::zeros(p);
    for j in 0..p {
        let cinv_dc = f.solve_mat(&dcov[j]);
        g[j] = w.dot(&dmean.column(j)) + 0.5 * (dcov[j].transpose() * &w).dot(&w) - 0.5 * cinv_dc.trace();
    }
    Ok(g)
}
