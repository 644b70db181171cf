//! The standard dual generator `φ(λ,f,ξ) = sup_ζ { f(ζ) − λ c(ξ,ζ) }`, its
//! reparametrization `ψ(μ,f,ξ) = μ φ(μ⁻¹,f,ξ)`, and the right-sided
//! λ-derivative obtained from the envelope formula,
//! `∂λ⁺φ = −min { c(ξ,ζ) : ζ ∈ argmax (f − λ c(ξ,·)) }`.
//!
//! The inner supremum is evaluated over the space grid plus the candidate
//! `ζ = ξ` (so `φ ≥ f(ξ)` holds even for off-grid ξ), optionally polished by
//! coordinate-wise golden-section refinement inside the grid cell of the
//! best node. Refinement is opt-in: callers enable it only for members that
//! are smooth in ζ, and it is always skipped at `λ = 0`, where the grid max
//! is used as is.

use crate::error::{Error, Result};
use crate::opt::golden_max;
use crate::scalar::Real;
use crate::space::{SamplePoint, SampleSpace, TransportCost};

#[derive(Debug, Clone, Copy)]
pub struct InnerMaxOptions<R> {
    /// Values within `tie_tol` of the maximum count as maximizers.
    pub tie_tol: R,
    /// Golden-section polish of the best node (smooth members only).
    pub refine: bool,
    /// Golden-section iterations per axis.
    pub refine_iters: usize,
}

impl<R: Real> InnerMaxOptions<R> {
    pub fn new(tie_tol: R, refine: bool) -> Self {
        Self {
            tie_tol,
            refine,
            refine_iters: 40,
        }
    }

    /// The default argmax tie tolerance `1e-9 (1 + ‖F‖∞)`.
    pub fn default_tie_tol(sup_norm: R) -> R {
        R::of(1e-9) * (R::one() + sup_norm)
    }
}

impl<R: Real> Default for InnerMaxOptions<R> {
    fn default() -> Self {
        Self {
            tie_tol: R::of(1e-9),
            refine: false,
            refine_iters: 40,
        }
    }
}

/// Result of one inner maximization.
#[derive(Debug, Clone)]
pub struct InnerMaxResult<R> {
    pub value: R,
    pub maximizers: Vec<SamplePoint<R>>,
    pub min_cost_to_argmax: R,
}

/// Evaluates `sup_ζ { f(ζ) − λ c(ξ,ζ) }` over `grid(space) ∪ {ξ}`.
pub fn inner_max<R, F>(
    f: F,
    lambda: R,
    xi: &SamplePoint<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    opts: &InnerMaxOptions<R>,
) -> Result<InnerMaxResult<R>>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    space.contains(xi)?;
    let nodes = space.grid();
    inner_max_on(&f, lambda, xi, cost, &nodes, space, opts)
}

/// Same as [`inner_max`] over a caller-provided candidate set (the candidate
/// `ζ = ξ` is still added). Refinement explores the grid cells of `space`.
pub fn inner_max_on<R, F>(
    f: &F,
    lambda: R,
    xi: &SamplePoint<R>,
    cost: &TransportCost<R>,
    nodes: &[SamplePoint<R>],
    space: &SampleSpace<R>,
    opts: &InnerMaxOptions<R>,
) -> Result<InnerMaxResult<R>>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if lambda < R::zero() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if nodes.is_empty() {
        return Err(Error::Empty("candidate grid"));
    }

    let gain = |zeta: &SamplePoint<R>| f(zeta) - lambda * cost.eval_unchecked(xi, zeta);

    let mut best_value = gain(xi);
    let mut best_point = xi.clone();
    let mut node_gains = Vec::with_capacity(nodes.len());
    for node in nodes {
        let g = gain(node);
        node_gains.push(g);
        if g > best_value {
            best_value = g;
            best_point = node.clone();
        }
    }

    let mut refined: Option<(SamplePoint<R>, R)> = None;
    if opts.refine && lambda > R::zero() {
        let (point, value) = refine_gain(&gain, &best_point, space, opts.refine_iters);
        if value > best_value {
            best_value = value;
            refined = Some((point, value));
        }
    }

    let threshold = best_value - opts.tie_tol;
    let mut maximizers = Vec::new();
    let mut min_cost = R::infinity();
    let push = |point: &SamplePoint<R>, min_cost: &mut R, maximizers: &mut Vec<_>| {
        let c = cost.eval_unchecked(xi, point);
        if c < *min_cost {
            *min_cost = c;
        }
        maximizers.push(point.clone());
    };
    for (node, &g) in nodes.iter().zip(node_gains.iter()) {
        if g >= threshold {
            push(node, &mut min_cost, &mut maximizers);
        }
    }
    if gain(xi) >= threshold {
        push(xi, &mut min_cost, &mut maximizers);
    }
    if let Some((point, value)) = refined {
        if value >= threshold {
            push(&point, &mut min_cost, &mut maximizers);
        }
    }
    debug_assert!(!maximizers.is_empty());

    Ok(InnerMaxResult {
        value: best_value,
        maximizers,
        min_cost_to_argmax: min_cost,
    })
}

/// Coordinate-wise golden-section pass around `start`, one grid cell wide
/// per axis, tracking the best evaluation seen.
pub(crate) fn refine_gain<R, G>(
    gain: &G,
    start: &SamplePoint<R>,
    space: &SampleSpace<R>,
    iters: usize,
) -> (SamplePoint<R>, R)
where
    R: Real,
    G: Fn(&SamplePoint<R>) -> R,
{
    let mut point = start.clone();
    let mut value = gain(&point);
    for axis in 0..space.continuous_dim() {
        let h = space.spacing(axis);
        if h == R::zero() {
            continue;
        }
        let (lo, hi) = space.boxes()[axis];
        let a = (point.continuous[axis] - h).max(lo);
        let b = (point.continuous[axis] + h).min(hi);
        if b <= a {
            continue;
        }
        let mut probe = point.clone();
        let (x, v) = golden_max(
            |t| {
                probe.continuous[axis] = t;
                gain(&probe)
            },
            a,
            b,
            R::of(1e-14) * (R::one() + h),
            iters,
        );
        if v > value {
            point.continuous[axis] = x;
            value = v;
        }
    }
    (point, value)
}

/// `φ(λ,f,ξ)`: the value of the inner maximization.
pub fn phi<R, F>(
    f: F,
    lambda: R,
    xi: &SamplePoint<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    opts: &InnerMaxOptions<R>,
) -> Result<R>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    Ok(inner_max(f, lambda, xi, cost, space, opts)?.value)
}

/// Right-sided derivative of `φ` in λ (envelope formula): the negated
/// minimal transport cost onto the argmax set. Always nonpositive.
pub fn phi_right_derivative<R, F>(
    f: F,
    lambda: R,
    xi: &SamplePoint<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    opts: &InnerMaxOptions<R>,
) -> Result<R>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    Ok(-inner_max(f, lambda, xi, cost, space, opts)?.min_cost_to_argmax)
}

/// `ψ(μ,f,ξ) = μ φ(μ⁻¹,f,ξ) = sup_ζ { μ f(ζ) − c(ξ,ζ) }` for `μ > 0`.
pub fn psi<R, F>(
    f: F,
    mu: R,
    xi: &SamplePoint<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    opts: &InnerMaxOptions<R>,
) -> Result<R>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if mu <= R::zero() {
        return Err(Error::InvalidParameter(format!(
            "mu must be positive, got {mu}"
        )));
    }
    Ok(mu * phi(f, mu.recip(), xi, cost, space, opts)?)
}
