//! Doubly regularized WDRO: the smooth dual generator
//! `φ^{τ,ε}(λ,f,ξ) = (ε+λτ) log E_{ζ∼π₀(·|ξ)}[ e^{(f(ζ)−λc(ξ,ζ))/(ε+λτ)} ]`,
//! reference conditional kernels with deterministic quadrature, the
//! conditional moments `m_c`, `m_{2,c}`, the dual upper bound
//! `λ_up = 2‖F‖∞/(ρ−m_c)`, and the regularized robust-risk solver on
//! `[0, λ_up]`.
//!
//! Conditional expectations are grid quadratures (weights proportional to
//! the kernel density at the nodes, normalized per ξ), so every quantity is
//! reproducible and exactly differentiable in λ. All log-sum-exp
//! computations are max-shifted; exponent underflow to zero is accepted.

use crate::error::{Error, Result};
use crate::opt::golden_min;
use crate::risk::{DualSolveResult, EmpiricalDistribution};
use crate::scalar::Real;
use crate::space::{SamplePoint, SampleSpace, TransportCost};

/// Regularization strengths: `ε > 0` on the objective, `τ ≥ 0` on the cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegParams<R> {
    pub tau: R,
    pub epsilon: R,
}

impl<R: Real> RegParams<R> {
    pub fn new(tau: R, epsilon: R) -> Result<Self> {
        if !(epsilon > R::zero() && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(tau >= R::zero() && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tau must be nonnegative, got {tau}"
            )));
        }
        Ok(Self { tau, epsilon })
    }

    /// Objective-only regularization (`τ = 0`).
    pub fn entropic(epsilon: R) -> Result<Self> {
        Self::new(R::zero(), epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind<R> {
    /// Density ∝ exp(−‖ζ−ξ‖²/(2σ²)) restricted to the space.
    TruncatedGaussian { sigma: R },
    /// Uniform over the quadrature nodes.
    Uniform,
    /// Density ∝ exp(−‖ζ−ξ‖/scale) restricted to the space.
    TruncatedLaplace { scale: R },
}

/// Conditional reference kernel `π₀(·|ξ)` with a quadrature resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceKernel<R> {
    pub kind: KernelKind<R>,
    pub quadrature_nodes: usize,
}

impl<R: Real> ReferenceKernel<R> {
    pub fn new(kind: KernelKind<R>, quadrature_nodes: usize) -> Result<Self> {
        if quadrature_nodes < 2 {
            return Err(Error::InvalidParameter(
                "quadrature_nodes must be >= 2".into(),
            ));
        }
        match kind {
            KernelKind::TruncatedGaussian { sigma } if !(sigma > R::zero()) => {
                return Err(Error::InvalidParameter(
                    "truncated_gaussian sigma must be positive".into(),
                ))
            }
            KernelKind::TruncatedLaplace { scale } if !(scale > R::zero()) => {
                return Err(Error::InvalidParameter(
                    "truncated_laplace scale must be positive".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            quadrature_nodes,
        })
    }

    fn log_density(&self, xi: &SamplePoint<R>, zeta: &SamplePoint<R>) -> R {
        let dist2 = xi
            .continuous
            .iter()
            .zip(zeta.continuous.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<R>();
        match self.kind {
            KernelKind::Uniform => R::zero(),
            KernelKind::TruncatedGaussian { sigma } => -dist2 / (R::of(2.0) * sigma * sigma),
            KernelKind::TruncatedLaplace { scale } => -dist2.sqrt() / scale,
        }
    }
}

/// Quadrature nodes of a kernel over a space (grid restricted to
/// `quadrature_nodes` points per continuous axis, all label combinations).
#[derive(Debug, Clone)]
pub struct KernelQuadrature<R> {
    kernel: ReferenceKernel<R>,
    nodes: Vec<SamplePoint<R>>,
}

impl<R: Real> KernelQuadrature<R> {
    pub fn new(kernel: &ReferenceKernel<R>, space: &SampleSpace<R>) -> Result<Self> {
        let quad_space = space.with_resolution(kernel.quadrature_nodes)?;
        Ok(Self {
            kernel: *kernel,
            nodes: quad_space.grid(),
        })
    }

    pub fn nodes(&self) -> &[SamplePoint<R>] {
        &self.nodes
    }

    /// Normalized weights of `π₀(·|ξ)` at the nodes (max-shifted density).
    pub fn weights(&self, xi: &SamplePoint<R>) -> Vec<R> {
        let log_d: Vec<R> = self
            .nodes
            .iter()
            .map(|n| self.kernel.log_density(xi, n))
            .collect();
        let max = log_d.iter().fold(R::neg_infinity(), |m, &v| m.max(v));
        let mut w: Vec<R> = log_d.iter().map(|&v| (v - max).exp()).collect();
        let total: R = w.iter().copied().sum();
        for v in &mut w {
            *v = *v / total;
        }
        w
    }
}

/// Quadrature realization of `E_{ζ∼π₀(·|ξ)}`: nodes with positive weights
/// summing to one.
pub fn kernel_quadrature<R: Real>(
    kernel: &ReferenceKernel<R>,
    xi: &SamplePoint<R>,
    space: &SampleSpace<R>,
) -> Result<Vec<(SamplePoint<R>, R)>> {
    space.contains(xi)?;
    let quad = KernelQuadrature::new(kernel, space)?;
    let weights = quad.weights(xi);
    Ok(quad.nodes.iter().cloned().zip(weights).collect())
}

/// Conditional moments `m_c = max_ξ E[c(ξ,·)]` and `m_{2,c} = max_ξ E[c²(ξ,·)]`
/// with the max taken over the ξ-grid of the space.
#[derive(Debug, Clone, Copy)]
pub struct KernelMoments<R> {
    pub m_c: R,
    pub m_2c: R,
}

pub fn kernel_moments<R: Real>(
    kernel: &ReferenceKernel<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
) -> Result<KernelMoments<R>> {
    let quad = KernelQuadrature::new(kernel, space)?;
    let mut m_c = R::zero();
    let mut m_2c = R::zero();
    for xi in space.grid() {
        let weights = quad.weights(&xi);
        let mut first = R::zero();
        let mut second = R::zero();
        for (node, &w) in quad.nodes.iter().zip(weights.iter()) {
            let c = cost.eval_unchecked(&xi, node);
            first = first + w * c;
            second = second + w * c * c;
        }
        m_c = m_c.max(first);
        m_2c = m_2c.max(second);
    }
    Ok(KernelMoments { m_c, m_2c })
}

/// Log-mean-exp with explicit weights, max-shifted.
fn log_mean_exp<R: Real>(weights: &[R], exponents: &[R]) -> R {
    let max = exponents
        .iter()
        .zip(weights.iter())
        .filter(|(_, &w)| w > R::zero())
        .fold(R::neg_infinity(), |m, (&x, _)| m.max(x));
    if !max.is_finite() {
        return max;
    }
    let sum: R = weights
        .iter()
        .zip(exponents.iter())
        .map(|(&w, &x)| w * (x - max).exp())
        .sum();
    max + sum.ln()
}

/// `φ^{τ,ε}(λ,f,ξ)` over the kernel quadrature.
pub fn phi_reg<R, F>(
    f: F,
    lambda: R,
    xi: &SamplePoint<R>,
    kernel: &ReferenceKernel<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    reg: &RegParams<R>,
) -> Result<R>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    let quad = KernelQuadrature::new(kernel, space)?;
    let fvals: Vec<R> = quad.nodes().iter().map(f).collect();
    let costs: Vec<R> = quad
        .nodes()
        .iter()
        .map(|n| cost.eval_unchecked(xi, n))
        .collect();
    let weights = quad.weights(xi);
    phi_reg_table(lambda, &fvals, &costs, &weights, reg)
}

pub(crate) fn phi_reg_table<R: Real>(
    lambda: R,
    fvals: &[R],
    costs: &[R],
    weights: &[R],
    reg: &RegParams<R>,
) -> Result<R> {
    if lambda < R::zero() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let nrm = reg.epsilon + lambda * reg.tau;
    let exponents: Vec<R> = fvals
        .iter()
        .zip(costs.iter())
        .map(|(&fv, &c)| (fv - lambda * c) / nrm)
        .collect();
    Ok(nrm * log_mean_exp(weights, &exponents))
}

/// Exact `∂λ φ^{τ,ε}` over the quadrature:
/// `−E_Gibbs[(τ f + ε c)/(ε+λτ)] + τ log E[e^{(f−λc)/(ε+λτ)}]`
/// with Gibbs weights ∝ `w e^{(f−λc)/(ε+λτ)}`.
pub fn phi_reg_derivative<R, F>(
    f: F,
    lambda: R,
    xi: &SamplePoint<R>,
    kernel: &ReferenceKernel<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    reg: &RegParams<R>,
) -> Result<R>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    let quad = KernelQuadrature::new(kernel, space)?;
    let fvals: Vec<R> = quad.nodes().iter().map(f).collect();
    let costs: Vec<R> = quad
        .nodes()
        .iter()
        .map(|n| cost.eval_unchecked(xi, n))
        .collect();
    let weights = quad.weights(xi);
    phi_reg_derivative_table(lambda, &fvals, &costs, &weights, reg)
}

pub(crate) fn phi_reg_derivative_table<R: Real>(
    lambda: R,
    fvals: &[R],
    costs: &[R],
    weights: &[R],
    reg: &RegParams<R>,
) -> Result<R> {
    if lambda < R::zero() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let nrm = reg.epsilon + lambda * reg.tau;
    let exponents: Vec<R> = fvals
        .iter()
        .zip(costs.iter())
        .map(|(&fv, &c)| (fv - lambda * c) / nrm)
        .collect();
    let lme = log_mean_exp(weights, &exponents);
    let max = exponents.iter().fold(R::neg_infinity(), |m, &x| m.max(x));
    let mut gibbs: Vec<R> = weights
        .iter()
        .zip(exponents.iter())
        .map(|(&w, &x)| w * (x - max).exp())
        .collect();
    let total: R = gibbs.iter().copied().sum();
    for g in &mut gibbs {
        *g = *g / total;
    }
    let mean_term: R = gibbs
        .iter()
        .zip(fvals.iter().zip(costs.iter()))
        .map(|(&g, (&fv, &c))| g * (reg.tau * fv + reg.epsilon * c) / nrm)
        .sum();
    Ok(-mean_term + reg.tau * lme)
}

/// Dual upper bound `λ_up = 2‖F‖∞ / (ρ − m_c)`; requires `ρ > m_c`.
pub fn lambda_up<R: Real>(rho: R, sup_norm: R, m_c: R) -> Result<R> {
    if !(rho > m_c) {
        return Err(Error::RegInfeasible {
            rho: rho.lossy(),
            m_c: m_c.lossy(),
        });
    }
    Ok(R::of(2.0) * sup_norm / (rho - m_c))
}

/// Precomputed quadrature and moments reused across solves.
pub struct RegContext<R> {
    pub quad: KernelQuadrature<R>,
    pub moments: KernelMoments<R>,
}

impl<R: Real> RegContext<R> {
    pub fn new(
        kernel: &ReferenceKernel<R>,
        cost: &TransportCost<R>,
        space: &SampleSpace<R>,
    ) -> Result<Self> {
        Ok(Self {
            quad: KernelQuadrature::new(kernel, space)?,
            moments: kernel_moments(kernel, cost, space)?,
        })
    }
}

/// Regularized robust risk: golden-section minimization of
/// `λρ + E_Q[φ^{τ,ε}(λ,f)]` over `λ ∈ [0, λ_up]`. `sup_norm` must be a
/// valid upper bound on `‖f‖∞` (it calibrates `λ_up`).
#[allow(clippy::too_many_arguments)]
pub fn robust_risk_reg<R, F>(
    q: &EmpiricalDistribution<R>,
    f: F,
    rho: R,
    kernel: &ReferenceKernel<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    reg: &RegParams<R>,
    sup_norm: R,
    tol: R,
) -> Result<DualSolveResult<R>>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    let ctx = RegContext::new(kernel, cost, space)?;
    robust_risk_reg_with(&ctx, q, f, rho, cost, reg, sup_norm, tol)
}

#[allow(clippy::too_many_arguments)]
pub fn robust_risk_reg_with<R, F>(
    ctx: &RegContext<R>,
    q: &EmpiricalDistribution<R>,
    f: F,
    rho: R,
    cost: &TransportCost<R>,
    reg: &RegParams<R>,
    sup_norm: R,
    tol: R,
) -> Result<DualSolveResult<R>>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if !(tol > R::zero()) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let up = lambda_up(rho, sup_norm, ctx.moments.m_c)?;
    let fvals: Vec<R> = ctx.quad.nodes().iter().map(f).collect();
    let atom_tables: Vec<(Vec<R>, Vec<R>)> = q
        .atoms
        .iter()
        .map(|xi| {
            let costs = ctx
                .quad
                .nodes()
                .iter()
                .map(|n| cost.eval_unchecked(xi, n))
                .collect();
            let weights = ctx.quad.weights(xi);
            (costs, weights)
        })
        .collect();

    let mut evaluations = 0usize;
    let mut best_lambda = R::zero();
    let mut best_value = R::infinity();
    let mut objective = |lambda: R| -> R {
        evaluations += 1;
        let mut acc = lambda * rho;
        for ((costs, weights), &w) in atom_tables.iter().zip(q.weights.iter()) {
            let p = phi_reg_table(lambda, &fvals, costs, weights, reg)
                .unwrap_or_else(|_| R::infinity());
            acc = acc + w * p;
        }
        if acc < best_value {
            best_value = acc;
            best_lambda = lambda;
        }
        acc
    };

    objective(R::zero());
    objective(up);
    let res = golden_min(&mut objective, R::zero(), up, tol, 400);

    Ok(DualSolveResult {
        lambda_star: best_lambda,
        value: best_value,
        bracket: res.bracket,
        evaluations,
        flat_at_cap: false,
    })
}

/// Finite-difference magnitudes of `∂μ ψ^{0,ε}(μ) = ∂μ [μ φ^{0,ε}(μ⁻¹)]` at
/// the given μ values. Diagnostic for the loss of Lipschitzness of ψ near
/// μ = 0 under a truncated Laplace kernel; requires `τ = 0`.
#[allow(clippy::too_many_arguments)]
pub fn psi_mu_derivative_probe<R, F>(
    mu_list: &[R],
    f: F,
    xi: &SamplePoint<R>,
    kernel: &ReferenceKernel<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    reg: &RegParams<R>,
) -> Result<Vec<R>>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if reg.tau != R::zero() {
        return Err(Error::InvalidParameter(
            "the psi derivative probe requires tau = 0".into(),
        ));
    }
    if !matches!(kernel.kind, KernelKind::TruncatedLaplace { .. }) {
        return Err(Error::InvalidParameter(
            "the psi derivative probe requires a truncated_laplace kernel".into(),
        ));
    }
    let quad = KernelQuadrature::new(kernel, space)?;
    let fvals: Vec<R> = quad.nodes().iter().map(f).collect();
    let costs: Vec<R> = quad
        .nodes()
        .iter()
        .map(|n| cost.eval_unchecked(xi, n))
        .collect();
    let weights = quad.weights(xi);
    let psi = |mu: R| -> Result<R> {
        Ok(mu * phi_reg_table(mu.recip(), &fvals, &costs, &weights, reg)?)
    };
    let mut out = Vec::with_capacity(mu_list.len());
    for &mu in mu_list {
        if !(mu > R::zero()) {
            return Err(Error::InvalidParameter(format!(
                "mu values must be positive, got {mu}"
            )));
        }
        let h = mu * R::of(1e-4);
        let d = (psi(mu + h)? - psi(mu - h)?) / (R::of(2.0) * h);
        out.push(d.abs());
    }
    Ok(out)
}
