//! Numerical inversion of the tilted characteristic function for the P-factor
//! `P_n(s, θ) = (2π)^{−m} ∫ exp(n[K0(s+iφ) − K0(s) − iφK0'(s)]) dφ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cgf::{CgfModel, SupportKind};
use crate::error::{Result, SaddleError};
use crate::linalg::{pairwise_sum, SpdFactor};

/// One-dimensional rule used along each axis of the truncated box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadScheme {
    TrapezoidPeriodic,
    TanhSinh,
    PlainTrapezoid,
}

#[derive(Debug, Clone)]
pub struct QuadratureConfig {
    /// Odd node count per axis for continuous models.
    pub nodes_per_dim: usize,
    /// Minimum node count per axis on `[−π, π)` for lattice models.
    pub lattice_nodes: usize,
    /// Box half-width in tilted-Gaussian standard deviations.
    pub truncation_radius_multiplier: f64,
    /// Rule for continuous models; lattice models always use the periodic trapezoid.
    pub scheme: QuadScheme,
    /// Largest acceptable integrand modulus on the box faces, relative to the peak.
    pub tail_tol: f64,
    /// Cap on nodes per axis when the box is widened, for m = 1 and m = 2.
    pub max_nodes_1d: usize,
    pub max_nodes_2d: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_dim: 201,
            lattice_nodes: 256,
            truncation_radius_multiplier: 12.0,
            scheme: QuadScheme::PlainTrapezoid,
            tail_tol: 1e-10,
            max_nodes_1d: (1 << 22) + 1,
            max_nodes_2d: 2049,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rule1D {
    scheme: QuadScheme,
    nodes: usize,
    radius: f64,
}

impl Rule1D {
    /// Node and weight `i`.
    fn at(&self, i: usize) -> (f64, f64) {
        let n = self.nodes;
        match self.scheme {
            QuadScheme::TrapezoidPeriodic => {
                let h = 2.0 * std::f64::consts::PI / n as f64;
                (-std::f64::consts::PI + h * i as f64, h)
            }
            QuadScheme::PlainTrapezoid => {
                let h = 2.0 * self.radius / (n - 1) as f64;
                let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                (-self.radius + h * i as f64, w)
            }
            QuadScheme::TanhSinh => {
                // t ∈ [−T, T] mapped onto (−R, R); T chosen so the end weights are negligible.
                let t_max = 3.2;
                let dt = 2.0 * t_max / (n - 1) as f64;
                let t = -t_max + dt * i as f64;
                let half_pi = std::f64::consts::FRAC_PI_2;
                let u = half_pi * t.sinh();
                let c = u.cosh();
                (self.radius * u.tanh(), self.radius * half_pi * t.cosh() / (c * c) * dt)
            }
        }
    }

    /// Indices of the two outermost nodes.
    fn faces(&self) -> [usize; 2] {
        [0, self.nodes - 1]
    }
}

/// Quadrature value of `P` and, when requested, `∇s log P` and `∇θ log P`.
#[derive(Debug, Clone)]
pub struct QuadOutcome {
    pub p: f64,
    pub dlogp_ds: Option<DVector<f64>>,
    pub dlogp_dtheta: Option<DVector<f64>>,
    pub nodes: usize,
    pub radii: Vec<f64>,
}

struct Integrand<'a> {
    model: &'a dyn CgfModel,
    theta: &'a DVector<f64>,
    s: &'a DVector<f64>,
    n: f64,
    k_s: f64,
    grad_s: DVector<f64>,
    hess_s: DMatrix<f64>,
    grad_theta: Option<DVector<f64>>,
    cross: Option<DMatrix<f64>>,
}

impl Integrand<'_> {
    /// `n[K0(s+iφ) − K0(s) − iφK0'(s)]`.
    fn exponent(&self, phi: &DVector<f64>) -> Result<(Complex64, Vec<Complex64>)> {
        let (k, g) = self
            .model
            .complex_cgf(self.s, phi, self.theta)
            .ok_or_else(|| SaddleError::NotSupported(format!("{} has no complex MGF", self.model.name())))?;
        let lin = phi.dot(&self.grad_s);
        Ok((self.n * (k - self.k_s - Complex64::new(0.0, lin)), g))
    }

    fn modulus(&self, phi: &DVector<f64>) -> Result<f64> {
        Ok(self.exponent(phi)?.0.re.exp())
    }

    /// Real parts of `f`, `f·∂s(exponent)`, `f·∂θ(exponent)`, and the imaginary part of `f`.
    fn contributions(&self, phi: &DVector<f64>, out: &mut [f64]) -> Result<()> {
        let (e, g) = self.exponent(phi)?;
        let f = e.exp();
        out[0] = f.re;
        out[1] = f.im;
        let m = self.s.len();
        if out.len() > 2 {
            let hphi = &self.hess_s * phi;
            for k in 0..m {
                let d = self.n * (g[k] - self.grad_s[k] - Complex64::new(0.0, hphi[k]));
                out[2 + k] = (f * d).re;
            }
        }
        if let (Some(gt), Some(cross)) = (&self.grad_theta, &self.cross) {
            let gc = self
                .model
                .complex_grad_theta(self.s, phi, self.theta)
                .ok_or_else(|| SaddleError::NotSupported("complex theta gradient".into()))?;
            let cphi = cross.transpose() * phi;
            for j in 0..gt.len() {
                let d = self.n * (gc[j] - gt[j] - Complex64::new(0.0, cphi[j]));
                out[2 + m + j] = (f * d).re;
            }
        }
        Ok(())
    }
}

const CHUNK: usize = 4096;

/// Tensor-product sum of weighted contributions, deterministic across thread counts.
fn tensor_sum(rules: &[Rule1D], width: usize, integrand: &Integrand<'_>) -> Result<Vec<f64>> {
    let total: usize = rules.iter().map(|r| r.nodes).product();
    let chunks = total.div_ceil(CHUNK);
    let m = rules.len();
    let partials: Vec<Result<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(total);
            let mut cols = vec![Vec::with_capacity(hi - lo); width];
            let mut buf = vec![0.0; width];
            let mut phi = DVector::zeros(m);
            for idx in lo..hi {
                let mut rem = idx;
                let mut w = 1.0;
                for d in (0..m).rev() {
                    let (x, wd) = rules[d].at(rem % rules[d].nodes);
                    rem /= rules[d].nodes;
                    phi[d] = x;
                    w *= wd;
                }
                integrand.contributions(&phi, &mut buf)?;
                for (col, v) in cols.iter_mut().zip(&buf) {
                    col.push(w * v);
                }
            }
            Ok(cols.iter().map(|c| pairwise_sum(c)).collect())
        })
        .collect();
    let partials: Vec<Vec<f64>> = partials.into_iter().collect::<Result<_>>()?;
    Ok((0..width)
        .map(|k| pairwise_sum(&partials.iter().map(|p| p[k]).collect::<Vec<_>>()))
        .collect())
}

/// Largest integrand modulus over the faces `φ_axis = ±R_axis` of the box.
fn face_max(rules: &[Rule1D], axis: usize, integrand: &Integrand<'_>) -> Result<f64> {
    let m = rules.len();
    let mut best: f64 = 0.0;
    for &face in &rules[axis].faces() {
        if m == 1 {
            let phi = DVector::from_element(1, rules[0].at(face).0);
            best = best.max(integrand.modulus(&phi)?);
        } else {
            let other = 1 - axis;
            for i in 0..rules[other].nodes {
                let mut phi = DVector::zeros(2);
                phi[axis] = rules[axis].at(face).0;
                phi[other] = rules[other].at(i).0;
                best = best.max(integrand.modulus(&phi)?);
            }
        }
    }
    Ok(best)
}

/// Computes `P_n(s, θ)` (or its lattice analogue) with optional log-gradients.
///
/// `want_grad_s` adds `∇s log P`; `want_grad_theta` adds `∇θ log P` holding `s` fixed,
/// which needs the model's complex θ-gradient.
pub fn p_factor(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    s: &DVector<f64>,
    n: f64,
    quad: &QuadratureConfig,
    want_grad_s: bool,
    want_grad_theta: bool,
) -> Result<QuadOutcome> {
    let sig = model.signature();
    let m = sig.m;
    if m > 2 {
        return Err(SaddleError::NotSupported(format!("exact inversion needs m <= 2, got m = {m}")));
    }
    if !(n > 0.0) {
        return Err(SaddleError::InvalidInput("n must be positive".into()));
    }
    if !model.capabilities().has_complex_mgf {
        return Err(SaddleError::NotSupported(format!("{} has no complex MGF", model.name())));
    }
    if !model.theta_in_domain(theta) || !model.s_in_domain(s, theta) {
        return Err(SaddleError::Domain("(s, theta) outside the model domain".into()));
    }
    let hess = model.hess_s(s, theta);
    let factor = SpdFactor::new(&hess)?;
    let hinv = factor.inverse();
    let sd: Vec<f64> = (0..m).map(|j| (hinv[(j, j)] / n).sqrt()).collect();
    let (grad_theta, cross) = if want_grad_theta {
        let e = crate::cgf::eval(
            model,
            s,
            theta,
            &[crate::cgf::Block::GradTheta, crate::cgf::Block::Cross],
            crate::cgf::FdPolicy::Allow,
        )?;
        (e.grad_theta, e.cross)
    } else {
        (None, None)
    };
    let integrand = Integrand {
        model,
        theta,
        s,
        n,
        k_s: model.k0(s, theta),
        grad_s: model.grad_s(s, theta),
        hess_s: hess,
        grad_theta,
        cross,
    };
    let mult = quad.truncation_radius_multiplier;

    let rules: Vec<Rule1D> = match sig.support_kind {
        SupportKind::IntegerLattice => (0..m)
            .map(|j| {
                // Enough nodes that aliasing stays beyond `mult` standard deviations of X.
                let spread = mult * (n * hess_diag(&integrand.hess_s, j)).sqrt();
                let need = (2.0 * spread + 1.0).ceil() as usize;
                Rule1D {
                    scheme: QuadScheme::TrapezoidPeriodic,
                    nodes: quad.lattice_nodes.max(need.next_power_of_two()),
                    radius: std::f64::consts::PI,
                }
            })
            .collect(),
        SupportKind::Continuous => {
            let nodes = quad.nodes_per_dim | 1;
            let cap = if m == 1 { quad.max_nodes_1d } else { quad.max_nodes_2d };
            let mut rules: Vec<Rule1D> =
                sd.iter().map(|&sj| Rule1D { scheme: quad.scheme, nodes, radius: mult * sj }).collect();
            for axis in 0..m {
                loop {
                    let tail = face_max(&rules, axis, &integrand)?;
                    if tail <= quad.tail_tol {
                        break;
                    }
                    let next = 2 * rules[axis].nodes - 1;
                    if next > cap {
                        return Err(SaddleError::TailNotDecayed { ratio: tail });
                    }
                    rules[axis].nodes = next;
                    rules[axis].radius *= 2.0;
                }
            }
            rules
        }
    };

    let width = 2 + if want_grad_s || want_grad_theta { m } else { 0 } + if want_grad_theta { sig.p } else { 0 };
    let sums = tensor_sum(&rules, width, &integrand)?;
    let scale = (2.0 * std::f64::consts::PI).powi(m as i32);
    let p = sums[0] / scale;
    if !(p > 0.0) || !p.is_finite() {
        return Err(SaddleError::QuadratureNonpositive { value: p });
    }
    let ratio = (sums[1] / sums[0]).abs();
    if ratio > 1e-8 {
        return Err(SaddleError::QuadratureImaginary { ratio });
    }
    let dlogp_ds = (want_grad_s || want_grad_theta).then(|| DVector::from_iterator(m, (0..m).map(|k| sums[2 + k] / sums[0])));
    let dlogp_dtheta =
        want_grad_theta.then(|| DVector::from_iterator(sig.p, (0..sig.p).map(|j| sums[2 + m + j] / sums[0])));
    Ok(QuadOutcome {
        p,
        dlogp_ds,
        dlogp_dtheta,
        nodes: rules.iter().map(|r| r.nodes).product(),
        radii: rules.iter().map(|r| r.radius).collect(),
    })
}

fn hess_diag(h: &DMatrix<f64>, j: usize) -> f64 {
    h[(j, j)]
}

/// `P_n(s, θ)` for continuous models or `P_int,n(s, θ)` for lattice models.
pub fn exact_p_factor(
    model: &dyn CgfModel,
    theta: &DVector<f64>,
    s: &DVector<f64>,
    n: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(p_factor(model, theta, s, n, quad, false, false)?.p)
}
