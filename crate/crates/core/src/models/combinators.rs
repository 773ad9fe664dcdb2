use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;

use crate::cgf::{Capabilities, CgfModel, ComplexCgf, ModelSignature, SupportKind};
use crate::error::{Result, SaddleError};
use crate::linalg::numerical_rank;

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

fn slice(v: &DVector<f64>, lo: usize, hi: usize) -> DVector<f64> {
    v.rows(lo, hi - lo).into_owned()
}

fn and_caps(a: Capabilities, b: Capabilities) -> Capabilities {
    Capabilities {
        has_analytic_theta_derivs: a.has_analytic_theta_derivs && b.has_analytic_theta_derivs,
        has_complex_mgf: a.has_complex_mgf && b.has_complex_mgf,
        has_second_nu_derivs: a.has_second_nu_derivs && b.has_second_nu_derivs,
        has_closed_form_likelihood: a.has_closed_form_likelihood && b.has_closed_form_likelihood,
    }
}

/// Independent components with separate parameter blocks:
/// `K0((s_1,…,s_k); (θ_1,…,θ_k)) = Σ K_i(s_i; θ_i)`.
#[derive(Clone)]
pub struct ProductModel {
    parts: Vec<Arc<dyn CgfModel>>,
    m_off: Vec<usize>,
    p_off: Vec<usize>,
}

impl ProductModel {
    pub fn new(parts: Vec<Arc<dyn CgfModel>>) -> Result<Self> {
        if parts.is_empty() {
            return Err(SaddleError::InvalidInput("product needs at least one part".into()));
        }
        let ms: Vec<usize> = parts.iter().map(|p| p.signature().m).collect();
        let ps: Vec<usize> = parts.iter().map(|p| p.signature().p).collect();
        Ok(Self { m_off: offsets(&ms), p_off: offsets(&ps), parts })
    }

    fn s_part(&self, s: &DVector<f64>, i: usize) -> DVector<f64> {
        slice(s, self.m_off[i], self.m_off[i + 1])
    }

    fn t_part(&self, t: &DVector<f64>, i: usize) -> DVector<f64> {
        slice(t, self.p_off[i], self.p_off[i + 1])
    }

    fn m(&self) -> usize {
        *self.m_off.last().unwrap()
    }

    fn p(&self) -> usize {
        *self.p_off.last().unwrap()
    }

    /// Which part owns global parameter index `j`, and its local index.
    fn owner(&self, j: usize) -> (usize, usize) {
        let i = (0..self.parts.len()).find(|&i| j < self.p_off[i + 1]).unwrap();
        (i, j - self.p_off[i])
    }
}

impl CgfModel for ProductModel {
    fn signature(&self) -> ModelSignature {
        let lattice = self.parts.iter().all(|p| p.signature().support_kind == SupportKind::IntegerLattice);
        ModelSignature {
            m: self.m(),
            p: self.p(),
            support_kind: if lattice { SupportKind::IntegerLattice } else { SupportKind::Continuous },
        }
    }

    fn name(&self) -> String {
        let names: Vec<String> = self.parts.iter().map(|p| p.name()).collect();
        format!("product({})", names.join(","))
    }

    fn capabilities(&self) -> Capabilities {
        self.parts.iter().map(|p| p.capabilities()).reduce(and_caps).unwrap()
    }

    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool {
        (0..self.parts.len()).all(|i| self.parts[i].theta_in_domain(&self.t_part(theta, i)))
    }

    fn s_in_domain(&self, s: &DVector<f64>, theta: &DVector<f64>) -> bool {
        (0..self.parts.len()).all(|i| self.parts[i].s_in_domain(&self.s_part(s, i), &self.t_part(theta, i)))
    }

    fn dual_box(&self, theta: &DVector<f64>) -> Vec<(f64, f64)> {
        (0..self.parts.len()).flat_map(|i| self.parts[i].dual_box(&self.t_part(theta, i))).collect()
    }

    fn start_hint(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let hints: Vec<Option<DVector<f64>>> =
            (0..self.parts.len()).map(|i| self.parts[i].start_hint(&self.t_part(theta, i))).collect();
        if hints.iter().all(|h| h.is_none()) {
            return None;
        }
        let mut s = DVector::zeros(self.m());
        for (i, h) in hints.into_iter().enumerate() {
            if let Some(h) = h {
                s.rows_mut(self.m_off[i], h.len()).copy_from(&h);
            }
        }
        Some(s)
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        (0..self.parts.len()).map(|i| self.parts[i].k0(&self.s_part(s, i), &self.t_part(theta, i))).sum()
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.m());
        for i in 0..self.parts.len() {
            let gi = self.parts[i].grad_s(&self.s_part(s, i), &self.t_part(theta, i));
            g.rows_mut(self.m_off[i], gi.len()).copy_from(&gi);
        }
        g
    }

    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        let mut h = DMatrix::zeros(m, m);
        for i in 0..self.parts.len() {
            let hi = self.parts[i].hess_s(&self.s_part(s, i), &self.t_part(theta, i));
            let o = self.m_off[i];
            h.view_mut((o, o), hi.shape()).copy_from(&hi);
        }
        h
    }

    fn third_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let m = self.m();
        let mut out = Vec::with_capacity(m);
        for i in 0..self.parts.len() {
            let ti = self.parts[i].third_s(&self.s_part(s, i), &self.t_part(theta, i))?;
            let o = self.m_off[i];
            for local in ti {
                let mut big = DMatrix::zeros(m, m);
                big.view_mut((o, o), local.shape()).copy_from(&local);
                out.push(big);
            }
        }
        Some(out)
    }

    fn grad_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let mut g = DVector::zeros(self.p());
        for i in 0..self.parts.len() {
            let gi = self.parts[i].grad_theta(&self.s_part(s, i), &self.t_part(theta, i))?;
            g.rows_mut(self.p_off[i], gi.len()).copy_from(&gi);
        }
        Some(g)
    }

    fn cross(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut c = DMatrix::zeros(self.m(), self.p());
        for i in 0..self.parts.len() {
            let ci = self.parts[i].cross(&self.s_part(s, i), &self.t_part(theta, i))?;
            c.view_mut((self.m_off[i], self.p_off[i]), ci.shape()).copy_from(&ci);
        }
        Some(c)
    }

    fn hess_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.p(), self.p());
        for i in 0..self.parts.len() {
            let hi = self.parts[i].hess_theta(&self.s_part(s, i), &self.t_part(theta, i))?;
            let o = self.p_off[i];
            h.view_mut((o, o), hi.shape()).copy_from(&hi);
        }
        Some(h)
    }

    fn dhess_dtheta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let m = self.m();
        let mut out = Vec::with_capacity(self.p());
        for i in 0..self.parts.len() {
            let di = self.parts[i].dhess_dtheta(&self.s_part(s, i), &self.t_part(theta, i))?;
            let o = self.m_off[i];
            for local in di {
                let mut big = DMatrix::zeros(m, m);
                big.view_mut((o, o), local.shape()).copy_from(&local);
                out.push(big);
            }
        }
        Some(out)
    }

    fn d2hess_dtheta2(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Vec<DMatrix<f64>>>> {
        let (m, p) = (self.m(), self.p());
        let locals: Vec<Vec<Vec<DMatrix<f64>>>> = (0..self.parts.len())
            .map(|i| self.parts[i].d2hess_dtheta2(&self.s_part(s, i), &self.t_part(theta, i)))
            .collect::<Option<_>>()?;
        let mut grid = vec![vec![DMatrix::zeros(m, m); p]; p];
        for (a, row) in grid.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                let (ia, la) = self.owner(a);
                let (ib, lb) = self.owner(b);
                if ia == ib {
                    let local = &locals[ia][la][lb];
                    let o = self.m_off[ia];
                    cell.view_mut((o, o), local.shape()).copy_from(local);
                }
            }
        }
        Some(grid)
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let mut value = Complex64::new(0.0, 0.0);
        let mut grad = Vec::with_capacity(self.m());
        for i in 0..self.parts.len() {
            let (v, g) = self.parts[i].complex_cgf(&self.s_part(s, i), &self.s_part(phi, i), &self.t_part(theta, i))?;
            value += v;
            grad.extend(g);
        }
        Some((value, grad))
    }

    fn complex_grad_theta(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Complex64>> {
        let mut out = Vec::with_capacity(self.p());
        for i in 0..self.parts.len() {
            out.extend(self.parts[i].complex_grad_theta(&self.s_part(s, i), &self.s_part(phi, i), &self.t_part(theta, i))?);
        }
        Some(out)
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        (0..self.parts.len())
            .map(|i| self.parts[i].closed_form_log_density(&self.t_part(theta, i), &self.s_part(x, i), n))
            .sum()
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        let mut g = DVector::zeros(self.p());
        for i in 0..self.parts.len() {
            let gi = self.parts[i].closed_form_grad(&self.t_part(theta, i), &self.s_part(x, i), n)?;
            g.rows_mut(self.p_off[i], gi.len()).copy_from(&gi);
        }
        Some(g)
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let mut x = DVector::zeros(self.m());
        for i in 0..self.parts.len() {
            let xi = self.parts[i].sample(&self.t_part(theta, i), n, rng)?;
            x.rows_mut(self.m_off[i], xi.len()).copy_from(&xi);
        }
        Some(x)
    }
}

/// `X = AU + n·c`: a linear image of a latent model with an optional per-summand
/// offset `c`, so that `K0(s) = K_U(sA) + s·c`.
#[derive(Clone)]
pub struct LinearMapModel {
    a: DMatrix<f64>,
    offset: DVector<f64>,
    latent: Arc<dyn CgfModel>,
}

/// Builds `X = AU`; `A` must be m × k with rank m, where k is the latent dimension.
pub fn compose_linear(a: DMatrix<f64>, latent: Arc<dyn CgfModel>) -> Result<LinearMapModel> {
    let m = a.nrows();
    LinearMapModel::with_offset(a, DVector::zeros(m), latent)
}

impl LinearMapModel {
    pub fn with_offset(a: DMatrix<f64>, offset: DVector<f64>, latent: Arc<dyn CgfModel>) -> Result<Self> {
        let k = latent.signature().m;
        if a.ncols() != k || a.nrows() == 0 || offset.len() != a.nrows() {
            return Err(SaddleError::InvalidInput(format!(
                "A must be m x {k} and the offset length m; got {}x{} and {}",
                a.nrows(),
                a.ncols(),
                offset.len()
            )));
        }
        if numerical_rank(&a, 1e-10) < a.nrows() {
            return Err(SaddleError::RankDeficient(format!("A has rank below {}", a.nrows())));
        }
        Ok(Self { a, offset, latent })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    fn t(&self, s: &DVector<f64>) -> DVector<f64> {
        self.a.transpose() * s
    }

    fn sandwich(&self, inner: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a * inner * self.a.transpose()
    }

    fn is_integral(&self) -> bool {
        self.a.iter().chain(self.offset.iter()).all(|v| v.fract() == 0.0)
    }
}

impl CgfModel for LinearMapModel {
    fn signature(&self) -> ModelSignature {
        let lat = self.latent.signature();
        let lattice = lat.support_kind == SupportKind::IntegerLattice && self.is_integral();
        ModelSignature {
            m: self.a.nrows(),
            p: lat.p,
            support_kind: if lattice { SupportKind::IntegerLattice } else { SupportKind::Continuous },
        }
    }

    fn name(&self) -> String {
        format!("linear({})", self.latent.name())
    }

    fn capabilities(&self) -> Capabilities {
        let mut c = self.latent.capabilities();
        c.has_closed_form_likelihood &= self.a.is_square() && self.latent.signature().support_kind == SupportKind::Continuous;
        c
    }

    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool {
        self.latent.theta_in_domain(theta)
    }

    fn s_in_domain(&self, s: &DVector<f64>, theta: &DVector<f64>) -> bool {
        self.latent.s_in_domain(&self.t(s), theta)
    }

    fn start_hint(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let h = self.latent.start_hint(theta)?;
        // Least-squares preimage of the latent hint under t = Aᵀs.
        self.a.transpose().svd(true, true).solve(&h, 1e-12).ok()
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.latent.k0(&self.t(s), theta) + s.dot(&self.offset)
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        &self.a * self.latent.grad_s(&self.t(s), theta) + &self.offset
    }

    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        self.sandwich(&self.latent.hess_s(&self.t(s), theta))
    }

    fn third_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let lat = self.latent.third_s(&self.t(s), theta)?;
        let (m, k) = self.a.shape();
        Some(
            (0..m)
                .map(|row| {
                    let mut inner = DMatrix::zeros(k, k);
                    for (c, tc) in lat.iter().enumerate() {
                        inner += tc * self.a[(row, c)];
                    }
                    self.sandwich(&inner)
                })
                .collect(),
        )
    }

    fn grad_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DVector<f64>> {
        self.latent.grad_theta(&self.t(s), theta)
    }

    fn cross(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(&self.a * self.latent.cross(&self.t(s), theta)?)
    }

    fn hess_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.latent.hess_theta(&self.t(s), theta)
    }

    fn dhess_dtheta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(self.latent.dhess_dtheta(&self.t(s), theta)?.iter().map(|d| self.sandwich(d)).collect())
    }

    fn d2hess_dtheta2(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Vec<DMatrix<f64>>>> {
        Some(
            self.latent
                .d2hess_dtheta2(&self.t(s), theta)?
                .iter()
                .map(|row| row.iter().map(|d| self.sandwich(d)).collect())
                .collect(),
        )
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let (v, g) = self.latent.complex_cgf(&self.t(s), &self.t(phi), theta)?;
        let (m, k) = self.a.shape();
        let grad = (0..m)
            .map(|i| (0..k).map(|c| g[c] * self.a[(i, c)]).sum::<Complex64>() + self.offset[i])
            .collect();
        let shift = Complex64::new(s.dot(&self.offset), phi.dot(&self.offset));
        Some((v + shift, grad))
    }

    fn complex_grad_theta(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Complex64>> {
        self.latent.complex_grad_theta(&self.t(s), &self.t(phi), theta)
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        if !self.capabilities().has_closed_form_likelihood {
            return None;
        }
        let lu = self.a.clone().lu();
        let u = lu.solve(&(x - &self.offset * n))?;
        Some(self.latent.closed_form_log_density(theta, &u, n)? - lu.determinant().abs().ln())
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        if !self.capabilities().has_closed_form_likelihood {
            return None;
        }
        let u = self.a.clone().lu().solve(&(x - &self.offset * n))?;
        self.latent.closed_form_grad(theta, &u, n)
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        Some(&self.a * self.latent.sample(theta, n, rng)? + &self.offset * n)
    }
}

/// `k` independent blocks sharing θ, block `j` being an `nβ_j`-fold sum of the base:
/// `K⃗0(s⃗) = Σ β_j K0(s_j)`.
#[derive(Clone)]
pub struct ConcatModel {
    base: Arc<dyn CgfModel>,
    beta: Vec<f64>,
    m0: usize,
}

pub fn compose_concat(base: Arc<dyn CgfModel>, beta: Vec<f64>) -> Result<ConcatModel> {
    if beta.is_empty() || beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(SaddleError::InvalidInput("beta must be a non-empty list of positive reals".into()));
    }
    let m0 = base.signature().m;
    Ok(ConcatModel { base, beta, m0 })
}

impl ConcatModel {
    pub fn blocks(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    fn block(&self, s: &DVector<f64>, j: usize) -> DVector<f64> {
        slice(s, j * self.m0, (j + 1) * self.m0)
    }

    fn m(&self) -> usize {
        self.m0 * self.beta.len()
    }

    fn block_diag(&self, blocks: impl Iterator<Item = DMatrix<f64>>) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);
        for (j, b) in blocks.enumerate() {
            let o = j * self.m0;
            out.view_mut((o, o), b.shape()).copy_from(&b);
        }
        out
    }
}

impl CgfModel for ConcatModel {
    fn signature(&self) -> ModelSignature {
        let b = self.base.signature();
        ModelSignature { m: self.m(), p: b.p, support_kind: b.support_kind }
    }

    fn name(&self) -> String {
        format!("concat{}({})", self.beta.len(), self.base.name())
    }

    fn capabilities(&self) -> Capabilities {
        self.base.capabilities()
    }

    fn theta_in_domain(&self, theta: &DVector<f64>) -> bool {
        self.base.theta_in_domain(theta)
    }

    fn s_in_domain(&self, s: &DVector<f64>, theta: &DVector<f64>) -> bool {
        (0..self.beta.len()).all(|j| self.base.s_in_domain(&self.block(s, j), theta))
    }

    fn dual_box(&self, theta: &DVector<f64>) -> Vec<(f64, f64)> {
        let b = self.base.dual_box(theta);
        (0..self.beta.len()).flat_map(|_| b.clone()).collect()
    }

    fn start_hint(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let h = self.base.start_hint(theta)?;
        Some(DVector::from_iterator(self.m(), (0..self.beta.len()).flat_map(|_| h.iter().copied())))
    }

    fn k0(&self, s: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.beta.iter().enumerate().map(|(j, b)| b * self.base.k0(&self.block(s, j), theta)).sum()
    }

    fn grad_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.m());
        for (j, b) in self.beta.iter().enumerate() {
            let gj = self.base.grad_s(&self.block(s, j), theta) * *b;
            g.rows_mut(j * self.m0, self.m0).copy_from(&gj);
        }
        g
    }

    fn hess_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        self.block_diag(self.beta.iter().enumerate().map(|(j, b)| self.base.hess_s(&self.block(s, j), theta) * *b))
    }

    fn third_s(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let m = self.m();
        let mut out = Vec::with_capacity(m);
        for (j, b) in self.beta.iter().enumerate() {
            for local in self.base.third_s(&self.block(s, j), theta)? {
                let mut big = DMatrix::zeros(m, m);
                let o = j * self.m0;
                big.view_mut((o, o), local.shape()).copy_from(&(local * *b));
                out.push(big);
            }
        }
        Some(out)
    }

    fn grad_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let mut acc = DVector::zeros(self.base.signature().p);
        for (j, b) in self.beta.iter().enumerate() {
            acc += self.base.grad_theta(&self.block(s, j), theta)? * *b;
        }
        Some(acc)
    }

    fn cross(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = self.base.signature().p;
        let mut c = DMatrix::zeros(self.m(), p);
        for (j, b) in self.beta.iter().enumerate() {
            let cj = self.base.cross(&self.block(s, j), theta)? * *b;
            c.view_mut((j * self.m0, 0), cj.shape()).copy_from(&cj);
        }
        Some(c)
    }

    fn hess_theta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = self.base.signature().p;
        let mut acc = DMatrix::zeros(p, p);
        for (j, b) in self.beta.iter().enumerate() {
            acc += self.base.hess_theta(&self.block(s, j), theta)? * *b;
        }
        Some(acc)
    }

    fn dhess_dtheta(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let per_block: Vec<Vec<DMatrix<f64>>> = (0..self.beta.len())
            .map(|j| self.base.dhess_dtheta(&self.block(s, j), theta))
            .collect::<Option<_>>()?;
        let p = self.base.signature().p;
        Some(
            (0..p)
                .map(|i| self.block_diag(per_block.iter().zip(&self.beta).map(|(d, b)| &d[i] * *b)))
                .collect(),
        )
    }

    fn d2hess_dtheta2(&self, s: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Vec<DMatrix<f64>>>> {
        let per_block: Vec<Vec<Vec<DMatrix<f64>>>> = (0..self.beta.len())
            .map(|j| self.base.d2hess_dtheta2(&self.block(s, j), theta))
            .collect::<Option<_>>()?;
        let p = self.base.signature().p;
        Some(
            (0..p)
                .map(|i| {
                    (0..p)
                        .map(|k| self.block_diag(per_block.iter().zip(&self.beta).map(|(d, b)| &d[i][k] * *b)))
                        .collect()
                })
                .collect(),
        )
    }

    fn complex_cgf(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<ComplexCgf> {
        let mut value = Complex64::new(0.0, 0.0);
        let mut grad = Vec::with_capacity(self.m());
        for (j, b) in self.beta.iter().enumerate() {
            let (v, g) = self.base.complex_cgf(&self.block(s, j), &self.block(phi, j), theta)?;
            value += v * *b;
            grad.extend(g.into_iter().map(|c| c * *b));
        }
        Some((value, grad))
    }

    fn complex_grad_theta(&self, s: &DVector<f64>, phi: &DVector<f64>, theta: &DVector<f64>) -> Option<Vec<Complex64>> {
        let p = self.base.signature().p;
        let mut acc = vec![Complex64::new(0.0, 0.0); p];
        for (j, b) in self.beta.iter().enumerate() {
            let g = self.base.complex_grad_theta(&self.block(s, j), &self.block(phi, j), theta)?;
            for (a, gv) in acc.iter_mut().zip(g) {
                *a += gv * *b;
            }
        }
        Some(acc)
    }

    fn closed_form_log_density(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<f64> {
        self.beta
            .iter()
            .enumerate()
            .map(|(j, b)| self.base.closed_form_log_density(theta, &self.block(x, j), n * b))
            .sum()
    }

    fn closed_form_grad(&self, theta: &DVector<f64>, x: &DVector<f64>, n: f64) -> Option<DVector<f64>> {
        let mut acc = DVector::zeros(self.base.signature().p);
        for (j, b) in self.beta.iter().enumerate() {
            acc += self.base.closed_form_grad(theta, &self.block(x, j), n * b)?;
        }
        Some(acc)
    }

    fn sample(&self, theta: &DVector<f64>, n: f64, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let mut x = DVector::zeros(self.m());
        for (j, b) in self.beta.iter().enumerate() {
            let xj = self.base.sample(theta, n * b, rng)?;
            x.rows_mut(j * self.m0, self.m0).copy_from(&xj);
        }
        Some(x)
    }
}
