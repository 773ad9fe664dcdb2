//! The model contract: per-summand cumulant generating function `K0(s; θ)` and its
//! derivative blocks, with central finite-difference fallbacks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;

use crate::error::{Result, SaddleError};

/// Support of the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportKind {
    Continuous,
    IntegerLattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSignature {
    /// Dimension of the observation.
    pub m: usize,
    /// Dimension of the parameter.
    pub p: usize,
    pub support_kind: SupportKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub has_analytic_theta_derivs: bool,
    pub has_complex_mgf: bool,
    pub has_second_nu_derivs: bool,
    pub has_closed_form_likelihood: bool,
}

/// Complex CGF value `K0(z)` on a branch continuous in the imaginary part, and `K0'(z)`.
pub type ComplexCgf = (Complex64, Vec<Complex64>);

/// A parametric family described by the CGF of one summand.
///
/// Dual points `s` are row vectors stored as `DVector`s of length `m`; parameters are
/// `DVector`s of length `p`. Only the value and the first two `s`-derivatives are
/// required; every other block falls back to finite differences when absent.
pub trait CgfModel: Send + Sync {
    fn signature(&self) -> ModelSignature;

    fn name(&self) -> String;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool;

    /// Whether `s` lies in the open domain `S_θ`; `theta` is assumed valid.
    fn s_in_domain(&self, s: &DVector<f64>, theta: &DVector<f64>) -> bool;

    /// Optional per-coordinate open box containing `S_θ`.
    fn dual_box(&self, _theta: &DVector<f64>) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); self.signature().m]
    }

    /// Interior starting point for the saddlepoint solver when `0` is not interior.
    fn start_hint(&self, _theta: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64;
    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;
    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;

    /// `∂K0''/∂s_k` for each `k`.
    fn third_s(&self, _s: &DVector<f64>, _theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }
    fn grad_theta(&self, _s: &DVector<f64>, _theta: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
    /// `∇s∇θ K0`, an `m × p` matrix.
    fn cross(&self, _s: &DVector<f64>, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    fn hess_theta(&self, _s: &DVector<f64>, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    /// `∂K0''/∂θ_j` for each `j`.
    fn dhess_dtheta(&self, _s: &DVector<f64>, _theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }
    /// `∂²K0''/∂θ_i∂θ_j`, indexed `[i][j]`.
    fn d2hess_dtheta2(
        &self,
        _s: &DVector<f64>,
        _theta: &DVector<f64>,
    ) -> Option<Vec<Vec<DMatrix<f64>>>> {
        None
    }

    /// `K0(s + iφ)` and `K0'(s + iφ)`.
    fn complex_cgf(
        &self,
        _s: &DVector<f64>,
        _phi: &DVector<f64>,
        _theta: &DVector<f64>,
    ) -> Option<ComplexCgf> {
        None
    }
    /// `∇θ K0(s + iφ)`.
    fn complex_grad_theta(
        &self,
        _s: &DVector<f64>,
        _phi: &DVector<f64>,
        _theta: &DVector<f64>,
    ) -> Option<Vec<Complex64>> {
        None
    }

    /// Exact log density (or log pmf) of the `n`-fold sum at `x`.
    fn closed_form_log_density(&self, _theta: &DVector<f64>, _x: &DVector<f64>, _n: f64) -> Option<f64> {
        None
    }
    /// θ-gradient of [`CgfModel::closed_form_log_density`].
    fn closed_form_grad(&self, _theta: &DVector<f64>, _x: &DVector<f64>, _n: f64) -> Option<DVector<f64>> {
        None
    }

    /// Draws the `n`-fold sum `X_θ`.
    fn sample(&self, _theta: &DVector<f64>, _n: f64, _rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        None
    }
}

/// Identifies a derivative block of `K0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    K0,
    GradS,
    HessS,
    ThirdS,
    GradTheta,
    Cross,
    HessTheta,
    DHessDTheta,
    D2HessDTheta2,
}

/// A block value of any shape.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Scalar(f64),
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
    Matrices(Vec<DMatrix<f64>>),
    MatrixGrid(Vec<Vec<DMatrix<f64>>>),
}

impl BlockValue {
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            BlockValue::Scalar(v) => vec![*v],
            BlockValue::Vector(v) => v.iter().copied().collect(),
            BlockValue::Matrix(m) => m.iter().copied().collect(),
            BlockValue::Matrices(ms) => ms.iter().flat_map(|m| m.iter().copied()).collect(),
            BlockValue::MatrixGrid(g) => g
                .iter()
                .flat_map(|row| row.iter().flat_map(|m| m.iter().copied()))
                .collect(),
        }
    }
}

/// Whether missing analytic blocks may be filled numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdPolicy {
    Allow,
    Deny,
}

/// Default base step for finite-difference fallbacks.
pub const FD_STEP: f64 = 1e-6;

/// Requested derivative blocks at one `(s, θ)`; absent blocks were not requested.
#[derive(Debug, Clone, Default)]
pub struct CgfEvaluation {
    pub k0: Option<f64>,
    pub grad_s: Option<DVector<f64>>,
    pub hess_s: Option<DMatrix<f64>>,
    pub third_s: Option<Vec<DMatrix<f64>>>,
    pub grad_theta: Option<DVector<f64>>,
    pub cross: Option<DMatrix<f64>>,
    pub hess_theta: Option<DMatrix<f64>>,
    pub dhess_dtheta: Option<Vec<DMatrix<f64>>>,
    pub d2hess_dtheta2: Option<Vec<Vec<DMatrix<f64>>>>,
    /// Blocks that were filled by finite differences.
    pub fd_filled: Vec<Block>,
}

fn check_point(model: &dyn CgfModel, s: &DVector<f64>, theta: &DVector<f64>) -> Result<()> {
    let sig = model.signature();
    if s.len() != sig.m || theta.len() != sig.p {
        return Err(SaddleError::InvalidInput(format!(
            "expected s of length {} and theta of length {}, got {} and {}",
            sig.m,
            sig.p,
            s.len(),
            theta.len()
        )));
    }
    if s.iter().chain(theta.iter()).any(|v| !v.is_finite()) {
        return Err(SaddleError::Domain("non-finite coordinate".into()));
    }
    if !model.theta_in_domain(theta) {
        return Err(SaddleError::Domain(format!("theta {:?} outside parameter domain", theta.as_slice())));
    }
    if !model.s_in_domain(s, theta) {
        return Err(SaddleError::Domain(format!("s {:?} outside S_theta", s.as_slice())));
    }
    Ok(())
}

/// Evaluates the requested blocks of `K0` at `(s, θ)`.
pub fn eval(
    model: &dyn CgfModel,
    s: &DVector<f64>,
    theta: &DVector<f64>,
    order: &[Block],
    policy: FdPolicy,
) -> Result<CgfEvaluation> {
    check_point(model, s, theta)?;
    let mut out = CgfEvaluation::default();
    for &block in order {
        let analytic = analytic_block(model, block, s, theta);
        let value = match analytic {
            Some(v) => v,
            None => {
                if policy == FdPolicy::Deny {
                    return Err(SaddleError::NotSupported(format!(
                        "{block:?} has no analytic form for {}",
                        model.name()
                    )));
                }
                out.fd_filled.push(block);
                fd_derivative_oracle(model, s, theta, block, FD_STEP)?
            }
        };
        match (block, value) {
            (Block::K0, BlockValue::Scalar(v)) => out.k0 = Some(v),
            (Block::GradS, BlockValue::Vector(v)) => out.grad_s = Some(v),
            (Block::HessS, BlockValue::Matrix(v)) => out.hess_s = Some(v),
            (Block::ThirdS, BlockValue::Matrices(v)) => out.third_s = Some(v),
            (Block::GradTheta, BlockValue::Vector(v)) => out.grad_theta = Some(v),
            (Block::Cross, BlockValue::Matrix(v)) => out.cross = Some(v),
            (Block::HessTheta, BlockValue::Matrix(v)) => out.hess_theta = Some(v),
            (Block::DHessDTheta, BlockValue::Matrices(v)) => out.dhess_dtheta = Some(v),
            (Block::D2HessDTheta2, BlockValue::MatrixGrid(v)) => out.d2hess_dtheta2 = Some(v),
            (b, _) => unreachable!("shape mismatch for {b:?}"),
        }
    }
    Ok(out)
}

fn analytic_block(model: &dyn CgfModel, block: Block, s: &DVector<f64>, theta: &DVector<f64>) -> Option<BlockValue> {
    match block {
        Block::K0 => Some(BlockValue::Scalar(model.k0(s, theta))),
        Block::GradS => Some(BlockValue::Vector(model.grad_s(s, theta))),
        Block::HessS => Some(BlockValue::Matrix(model.hess_s(s, theta))),
        Block::ThirdS => model.third_s(s, theta).map(BlockValue::Matrices),
        Block::GradTheta => model.grad_theta(s, theta).map(BlockValue::Vector),
        Block::Cross => model.cross(s, theta).map(BlockValue::Matrix),
        Block::HessTheta => model.hess_theta(s, theta).map(BlockValue::Matrix),
        Block::DHessDTheta => model.dhess_dtheta(s, theta).map(BlockValue::Matrices),
        Block::D2HessDTheta2 => model.d2hess_dtheta2(s, theta).map(BlockValue::MatrixGrid),
    }
}

fn step_for(coord: f64, step: f64) -> f64 {
    step.max(step * coord.abs())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    S,
    Theta,
}

/// Values of `f` at `(s, θ) ± h e_k` along one axis, with a domain check.
fn stencil<T>(
    model: &dyn CgfModel,
    s: &DVector<f64>,
    theta: &DVector<f64>,
    axis: Axis,
    k: usize,
    h: f64,
    f: &dyn Fn(&DVector<f64>, &DVector<f64>) -> T,
) -> Result<(T, T)> {
    let eval_at = |sign: f64| -> Result<T> {
        let mut s2 = s.clone();
        let mut t2 = theta.clone();
        match axis {
            Axis::S => s2[k] += sign * h,
            Axis::Theta => t2[k] += sign * h,
        }
        if !model.theta_in_domain(&t2) || !model.s_in_domain(&s2, &t2) {
            return Err(SaddleError::Domain("finite-difference stencil leaves the domain".into()));
        }
        Ok(f(&s2, &t2))
    };
    Ok((eval_at(1.0)?, eval_at(-1.0)?))
}

/// Second central difference of `f` along `θ_i, θ_j`.
fn second_theta<T>(
    model: &dyn CgfModel,
    s: &DVector<f64>,
    theta: &DVector<f64>,
    i: usize,
    j: usize,
    h: &[f64],
    f: &dyn Fn(&DVector<f64>, &DVector<f64>) -> T,
) -> Result<(T, T, T, T)>
where
    T: Clone,
{
    let at = |di: f64, dj: f64| -> Result<T> {
        let mut t2 = theta.clone();
        t2[i] += di * h[i];
        t2[j] += dj * h[j];
        if !model.theta_in_domain(&t2) || !model.s_in_domain(s, &t2) {
            return Err(SaddleError::Domain("finite-difference stencil leaves the domain".into()));
        }
        Ok(f(s, &t2))
    };
    Ok((at(1.0, 1.0)?, at(1.0, -1.0)?, at(-1.0, 1.0)?, at(-1.0, -1.0)?))
}

/// Central-difference estimate of one derivative block.
///
/// First-order blocks difference the next-lower analytic block with step
/// `max(step, step·|coordinate|)`. Second θ-derivatives difference analytic first
/// θ-derivatives when the model has them, and otherwise take a second difference with
/// step `step^(2/3)`.
pub fn fd_derivative_oracle(
    model: &dyn CgfModel,
    s: &DVector<f64>,
    theta: &DVector<f64>,
    which: Block,
    step: f64,
) -> Result<BlockValue> {
    check_point(model, s, theta)?;
    let sig = model.signature();
    let (m, p) = (sig.m, sig.p);
    let hs: Vec<f64> = s.iter().map(|&c| step_for(c, step)).collect();
    let ht: Vec<f64> = theta.iter().map(|&c| step_for(c, step)).collect();
    let step2 = step.powf(2.0 / 3.0);
    let ht2: Vec<f64> = theta.iter().map(|&c| step_for(c, step2)).collect();

    let k0 = |a: &DVector<f64>, b: &DVector<f64>| model.k0(a, b);
    let gs = |a: &DVector<f64>, b: &DVector<f64>| model.grad_s(a, b);
    let hss = |a: &DVector<f64>, b: &DVector<f64>| model.hess_s(a, b);

    Ok(match which {
        Block::K0 => BlockValue::Scalar(model.k0(s, theta)),
        Block::GradS => {
            let mut g = DVector::zeros(m);
            for k in 0..m {
                let (a, b) = stencil(model, s, theta, Axis::S, k, hs[k], &k0)?;
                g[k] = (a - b) / (2.0 * hs[k]);
            }
            BlockValue::Vector(g)
        }
        Block::HessS => {
            let mut h = DMatrix::zeros(m, m);
            for k in 0..m {
                let (a, b) = stencil(model, s, theta, Axis::S, k, hs[k], &gs)?;
                h.set_column(k, &((a - b) / (2.0 * hs[k])));
            }
            BlockValue::Matrix(crate::linalg::symmetrize(&h))
        }
        Block::ThirdS => {
            let mut out = Vec::with_capacity(m);
            for k in 0..m {
                let (a, b) = stencil(model, s, theta, Axis::S, k, hs[k], &hss)?;
                out.push((a - b) / (2.0 * hs[k]));
            }
            BlockValue::Matrices(out)
        }
        Block::GradTheta => {
            let mut g = DVector::zeros(p);
            for j in 0..p {
                let (a, b) = stencil(model, s, theta, Axis::Theta, j, ht[j], &k0)?;
                g[j] = (a - b) / (2.0 * ht[j]);
            }
            BlockValue::Vector(g)
        }
        Block::Cross => {
            let mut c = DMatrix::zeros(m, p);
            for j in 0..p {
                let (a, b) = stencil(model, s, theta, Axis::Theta, j, ht[j], &gs)?;
                c.set_column(j, &((a - b) / (2.0 * ht[j])));
            }
            BlockValue::Matrix(c)
        }
        Block::HessTheta => {
            let mut h = DMatrix::zeros(p, p);
            if model.grad_theta(s, theta).is_some() {
                let gt = |a: &DVector<f64>, b: &DVector<f64>| model.grad_theta(a, b).unwrap();
                for j in 0..p {
                    let (a, b) = stencil(model, s, theta, Axis::Theta, j, ht[j], &gt)?;
                    h.set_column(j, &((a - b) / (2.0 * ht[j])));
                }
            } else {
                for i in 0..p {
                    for j in 0..p {
                        let (pp, pm, mp, mm) = second_theta(model, s, theta, i, j, &ht2, &k0)?;
                        h[(i, j)] = (pp - pm - mp + mm) / (4.0 * ht2[i] * ht2[j]);
                    }
                }
            }
            BlockValue::Matrix(crate::linalg::symmetrize(&h))
        }
        Block::DHessDTheta => {
            let mut out = Vec::with_capacity(p);
            for j in 0..p {
                let (a, b) = stencil(model, s, theta, Axis::Theta, j, ht[j], &hss)?;
                out.push(crate::linalg::symmetrize(&((a - b) / (2.0 * ht[j]))));
            }
            BlockValue::Matrices(out)
        }
        Block::D2HessDTheta2 => {
            let mut grid = vec![vec![DMatrix::zeros(m, m); p]; p];
            if model.dhess_dtheta(s, theta).is_some() {
                let dh = |a: &DVector<f64>, b: &DVector<f64>| model.dhess_dtheta(a, b).unwrap();
                for j in 0..p {
                    let (a, b) = stencil(model, s, theta, Axis::Theta, j, ht[j], &dh)?;
                    for i in 0..p {
                        grid[i][j] = (&a[i] - &b[i]) / (2.0 * ht[j]);
                    }
                }
                for i in 0..p {
                    for j in 0..i {
                        let avg = (&grid[i][j] + &grid[j][i]) * 0.5;
                        grid[i][j] = avg.clone();
                        grid[j][i] = avg;
                    }
                }
            } else {
                for i in 0..p {
                    for j in 0..p {
                        let (pp, pm, mp, mm) = second_theta(model, s, theta, i, j, &ht2, &hss)?;
                        grid[i][j] = (pp - pm - mp + mm) / (4.0 * ht2[i] * ht2[j]);
                    }
                }
            }
            BlockValue::MatrixGrid(grid)
        }
    })
}

/// Evaluates `M0(s + iφ)` and `K0'(s + iφ) = M0'/M0`.
pub fn eval_complex_mgf(
    model: &dyn CgfModel,
    s: &DVector<f64>,
    phi: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<(Complex64, Vec<Complex64>)> {
    check_point(model, s, theta)?;
    if phi.len() != s.len() || phi.iter().any(|v| !v.is_finite()) {
        return Err(SaddleError::InvalidInput("phi must be finite with the same length as s".into()));
    }
    let (k, grad) = model
        .complex_cgf(s, phi, theta)
        .ok_or_else(|| SaddleError::NotSupported(format!("{} has no complex MGF", model.name())))?;
    Ok((k.exp(), grad))
}

/// Column view helper: all blocks needed by the likelihood gradients.
pub const GRADIENT_BLOCKS: [Block; 6] = [
    Block::K0,
    Block::GradS,
    Block::HessS,
    Block::ThirdS,
    Block::GradTheta,
    Block::Cross,
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_shapes() {
        let v = BlockValue::Matrices(vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)]);
        assert_eq!(v.flatten().len(), 8);
    }
}
