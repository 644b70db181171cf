//! Certificate quantities for the exact generalization bound: the critical
//! radius, the maximal-radius curve `ρ_max(λ)`, the dual lower bound
//! `λ_low` (half the largest λ with `ρ_max(λ) ≥ ρ_crit/4`), the
//! concentration constants α and β with the sample-size threshold
//! `n_min = 16(α+β)²/ρ_crit²`, their regularized counterparts, and the
//! closed-form specializations for linear and logistic regression.
//!
//! Critical radii are computed against a reference distribution and the
//! θ-grid, so they are plug-in estimates: the infimum over a continuous Θ is
//! approximated from above by the grid minimum, while the discretized argmax
//! sets can only lower the per-sample transport costs.

use serde::Serialize;

use crate::dual::{inner_max_on, InnerMaxOptions};
use crate::error::{Error, Result};
use crate::losses::{ConstantSource, Family, FamilyConstants, LossFamily};
use crate::reg::{kernel_moments, lambda_up, KernelQuadrature, ReferenceKernel, RegParams};
use crate::risk::{robust_risk, EmpiricalDistribution};
use crate::scalar::Real;
use crate::space::{SamplePoint, SampleSpace, TransportCost};

const LAMBDA_BAR_CAP: f64 = 1e8;

/// `ρ_max(λ) = min over members of Σ_i w_i · min{c(ξ_i, ζ) : ζ ∈ argmax (f − λc(ξ_i,·))}`.
pub fn rho_max_at<R: Real>(
    family: &dyn Family<R>,
    p_ref: &EmpiricalDistribution<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    lambda: R,
    tie_tol: R,
) -> Result<R> {
    if family.member_count() == 0 {
        return Err(Error::Empty("family"));
    }
    for atom in &p_ref.atoms {
        space.contains(atom)?;
    }
    let nodes = space.grid();
    let opts = InnerMaxOptions::new(tie_tol, family.refine_inner());
    let mut best = R::infinity();
    for m in 0..family.member_count() {
        let f = |p: &SamplePoint<R>| family.eval_member(m, p);
        let mut acc = R::zero();
        for (atom, &w) in p_ref.atoms.iter().zip(p_ref.weights.iter()) {
            let r = inner_max_on(&f, lambda, atom, cost, &nodes, space, &opts)?;
            acc = acc + w * r.min_cost_to_argmax;
        }
        best = best.min(acc);
    }
    Ok(best)
}

/// Critical radius: `ρ_max` at `λ = 0`, i.e. the least expected cost of
/// moving a reference sample onto a member's global argmax set.
pub fn critical_radius<R: Real>(
    family: &dyn Family<R>,
    p_ref: &EmpiricalDistribution<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    tie_tol: R,
) -> Result<R> {
    rho_max_at(family, p_ref, cost, space, R::zero(), tie_tol)
}

/// Samples `ρ_max` on an ascending λ-grid.
pub fn rho_max_curve<R: Real>(
    family: &dyn Family<R>,
    p_ref: &EmpiricalDistribution<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    lambda_grid: &[R],
    tie_tol: R,
) -> Result<Vec<(R, R)>> {
    let mut prev = R::neg_infinity();
    for &l in lambda_grid {
        if l < R::zero() || l < prev {
            return Err(Error::InvalidParameter(
                "lambda grid must be nonnegative and ascending".into(),
            ));
        }
        prev = l;
    }
    lambda_grid
        .iter()
        .map(|&l| Ok((l, rho_max_at(family, p_ref, cost, space, l, tie_tol)?)))
        .collect()
}

/// Bisection for `λ̄ = sup { λ : ρ_max(λ) ≥ ρ_crit/4 }`; returns
/// `λ_low = λ̄/2`. Errors out when the critical radius vanishes.
pub fn lambda_low_numeric<R: Real>(
    family: &dyn Family<R>,
    p_ref: &EmpiricalDistribution<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    tie_tol: R,
) -> Result<R> {
    let rho_crit = critical_radius(family, p_ref, cost, space, tie_tol)?;
    if !(rho_crit > R::zero()) {
        return Err(Error::DegenerateFamily);
    }
    let target = rho_crit / R::of(4.0);
    let cap = R::of(LAMBDA_BAR_CAP);
    let eval = |l: R| rho_max_at(family, p_ref, cost, space, l, tie_tol);

    let mut lo = R::zero();
    let mut hi = R::one();
    // grow until the curve drops below the target (or the cap is hit)
    loop {
        if eval(hi)? < target {
            break;
        }
        lo = hi;
        if hi >= cap {
            return Ok(hi.half());
        }
        hi = (hi + hi).min(cap);
    }
    // invariant: rho_max(lo) >= target > rho_max(hi)
    while hi - lo > R::of(1e-7) * hi.max(R::one()) {
        let mid = (lo + hi).half();
        if eval(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.half())
}

/// Concentration constants of the standard generalization guarantee:
/// `α = 48(‖F‖∞ + 1/λ_low)(I_F + 2/λ_low) + (2‖F‖∞/λ_low)√(2 log(2/δ))`,
/// `β = 96 I_F/λ_low + (4‖F‖∞/λ_low)√(2 log(4/δ))`.
pub fn generalization_constants<R: Real>(
    lambda_low: R,
    sup_norm: R,
    dudley: R,
    delta: R,
) -> Result<(R, R)> {
    if !(delta > R::zero() && delta < R::one()) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    if !(lambda_low > R::zero()) {
        return Err(Error::InvalidParameter(format!(
            "lambda_low must be positive, got {lambda_low}"
        )));
    }
    let inv = lambda_low.recip();
    let two = R::of(2.0);
    let alpha = R::of(48.0) * (sup_norm + inv) * (dudley + two * inv)
        + two * sup_norm * inv * (two * (two / delta).ln()).sqrt();
    let beta = R::of(96.0) * dudley * inv
        + R::of(4.0) * sup_norm * inv * (two * (R::of(4.0) / delta).ln()).sqrt();
    Ok((alpha, beta))
}

/// Sample-size threshold `16(α+β)²/ρ_crit²`.
pub fn n_min_standard<R: Real>(alpha: R, beta: R, rho_crit: R) -> Result<R> {
    if !(rho_crit > R::zero()) {
        return Err(Error::DegenerateFamily);
    }
    let s = alpha + beta;
    Ok(R::of(16.0) * s * s / (rho_crit * rho_crit))
}

/// Regularized critical radius:
/// `inf_f E_P[ E_{π₀^{f/ε}}[(τ/ε) f + c(ξ,·)] − τ log E_{π₀}[e^{f/ε}] ]`
/// with all conditional expectations realized by kernel quadrature.
pub fn reg_critical_radius<R: Real>(
    family: &dyn Family<R>,
    p_ref: &EmpiricalDistribution<R>,
    kernel: &ReferenceKernel<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    reg: &RegParams<R>,
) -> Result<R> {
    if family.member_count() == 0 {
        return Err(Error::Empty("family"));
    }
    let quad = KernelQuadrature::new(kernel, space)?;
    let eps = reg.epsilon;
    let tau = reg.tau;
    let mut best = R::infinity();
    for m in 0..family.member_count() {
        let fvals: Vec<R> = quad
            .nodes()
            .iter()
            .map(|n| family.eval_member(m, n))
            .collect();
        let exponents: Vec<R> = fvals.iter().map(|&v| v / eps).collect();
        let max_e = exponents.iter().fold(R::neg_infinity(), |a, &b| a.max(b));
        let mut acc = R::zero();
        for (atom, &w) in p_ref.atoms.iter().zip(p_ref.weights.iter()) {
            let weights = quad.weights(atom);
            let mut z = R::zero();
            let mut tilted_mean = R::zero();
            for ((node, &wk), (&fv, &ex)) in quad
                .nodes()
                .iter()
                .zip(weights.iter())
                .zip(fvals.iter().zip(exponents.iter()))
            {
                let g = wk * (ex - max_e).exp();
                z = z + g;
                tilted_mean =
                    tilted_mean + g * (tau / eps * fv + cost.eval_unchecked(atom, node));
            }
            let log_mean = max_e + z.ln();
            acc = acc + w * (tilted_mean / z - tau * log_mean);
        }
        best = best.min(acc);
    }
    Ok(best)
}

/// Closed-form dual lower bound for the regularized problem:
/// `λ_low^{τ,ε} = 3ε ρ_crit^{τ,ε} / (8[(τ²/ε²)‖F‖∞² + m_{2,c} e^{‖F‖∞/ε + min{m_c/τ, 2‖F‖∞ m_c/((ρ−m_c)ε)}}])`.
/// For `τ = 0` the min resolves to its second argument.
pub fn lambda_low_reg_closed_form<R: Real>(
    sup_norm: R,
    m_c: R,
    m_2c: R,
    rho: R,
    rho_crit_reg: R,
    reg: &RegParams<R>,
) -> Result<R> {
    if !(rho > m_c) {
        return Err(Error::RegInfeasible {
            rho: rho.lossy(),
            m_c: m_c.lossy(),
        });
    }
    let eps = reg.epsilon;
    let tau = reg.tau;
    let second = R::of(2.0) * sup_norm * m_c / ((rho - m_c) * eps);
    let min_term = if tau == R::zero() {
        second
    } else {
        (m_c / tau).min(second)
    };
    let denom = (tau * tau) / (eps * eps) * sup_norm * sup_norm
        + m_2c * (sup_norm / eps + min_term).exp();
    Ok(R::of(3.0) * eps * rho_crit_reg / (R::of(8.0) * denom))
}

/// Regularized concentration constants:
/// `α^{τ,ε} = 48(‖F‖∞ + 1/λ + 2‖F‖∞ m_c ε/(ε(ρ−m_c)+2τ‖F‖∞))(I_F + 2/λ) + (2‖F‖∞/λ + m_c)√(2 log(2/δ))`,
/// `β^{τ,ε} = 96 I_F/λ + 4(‖F‖∞/λ + m_c)√(2 log(4/δ))`.
#[allow(clippy::too_many_arguments)]
pub fn reg_generalization_constants<R: Real>(
    lambda_low_reg: R,
    sup_norm: R,
    dudley: R,
    m_c: R,
    rho: R,
    reg: &RegParams<R>,
    delta: R,
) -> Result<(R, R)> {
    if !(rho > m_c) {
        return Err(Error::RegInfeasible {
            rho: rho.lossy(),
            m_c: m_c.lossy(),
        });
    }
    if !(delta > R::zero() && delta < R::one()) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    if !(lambda_low_reg > R::zero()) {
        return Err(Error::InvalidParameter(format!(
            "lambda_low_reg must be positive, got {lambda_low_reg}"
        )));
    }
    let two = R::of(2.0);
    let inv = lambda_low_reg.recip();
    let third = two * sup_norm * m_c * reg.epsilon
        / (reg.epsilon * (rho - m_c) + two * reg.tau * sup_norm);
    let alpha = R::of(48.0) * (sup_norm + inv + third) * (dudley + two * inv)
        + (two * sup_norm * inv + m_c) * (two * (two / delta).ln()).sqrt();
    let beta = R::of(96.0) * dudley * inv
        + R::of(4.0) * (sup_norm * inv + m_c) * (two * (R::of(4.0) / delta).ln()).sqrt();
    Ok((alpha, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearModelKind {
    LinearRegression,
    LogisticRegression,
}

/// Closed-form lower bounds for linear models under the bounded-away-from-
/// zero hypothesis domain: `ρ_crit ≥ D²` with `λ_low ≥ ω/2` (linear) or
/// `λ_low ≥ ω/(8(1+e^{DΩ}))` (logistic).
pub fn linear_model_constants<R: Real>(
    kind: LinearModelKind,
    omega: R,
    capital_omega: R,
    diameter: R,
) -> Result<(R, R)> {
    if !(omega > R::zero()) || !(diameter > R::zero()) {
        return Err(Error::InvalidParameter(
            "omega and the support diameter must be positive".into(),
        ));
    }
    let rho_crit_lb = diameter * diameter;
    let lambda_low_lb = match kind {
        LinearModelKind::LinearRegression => omega.half(),
        LinearModelKind::LogisticRegression => {
            omega / (R::of(8.0) * (R::one() + (diameter * capital_omega).exp()))
        }
    };
    Ok((rho_crit_lb, lambda_low_lb))
}

/// Degeneracy diagnostic: the minimal gap `max_Ξ f − R_ρ(f)` over members.
#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyReport<R> {
    pub rho: R,
    pub min_gap: R,
    pub degenerate: bool,
    pub worst_theta: Vec<R>,
}

pub fn degeneracy_check<R: Real>(
    family: &dyn Family<R>,
    p_ref: &EmpiricalDistribution<R>,
    rho: R,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    tol: R,
) -> Result<DegeneracyReport<R>> {
    if rho < R::zero() {
        return Err(Error::RadiusNegative { rho: rho.lossy() });
    }
    if family.member_count() == 0 {
        return Err(Error::Empty("family"));
    }
    let nodes = space.grid();
    let opts = InnerMaxOptions::new(R::of(1e-9), family.refine_inner());
    let mut min_gap = R::infinity();
    let mut worst = Vec::new();
    for m in 0..family.member_count() {
        let f = |p: &SamplePoint<R>| family.eval_member(m, p);
        // global max of the member: φ at λ = 0 from any base point
        let max_f = inner_max_on(&f, R::zero(), &nodes[0], cost, &nodes, space, &opts)?.value;
        let value = robust_risk(p_ref, f, rho, cost, space, R::of(1e-9), &opts)?;
        let gap = max_f - value;
        if gap < min_gap {
            min_gap = gap;
            worst = family.theta(m);
        }
    }
    Ok(DegeneracyReport {
        rho,
        min_gap,
        degenerate: min_gap <= tol,
        worst_theta: worst,
    })
}

/// Full certificate for the standard guarantee, with provenance.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateBundle<R> {
    pub rho_crit: R,
    pub lambda_low: R,
    pub dudley: R,
    pub sup_norm: R,
    pub lip_xi: R,
    pub lip_theta: R,
    pub alpha: R,
    pub beta: R,
    pub n_min: R,
    pub delta: R,
    /// Lower end `α/√n` of the admissible radius interval per requested n.
    pub rho_admissible_lower: Vec<(u64, R)>,
    /// `ρ_max(λ) ≥ ρ_crit/4` verified on a probe grid of `[0, 2 λ_low]`.
    pub lambda_low_certified: bool,
    pub constants_source: ConstantSource,
    pub tie_tol: R,
    pub grid_resolution: usize,
    pub theta_members: usize,
}

/// Assembles the standard certificate for a loss family.
#[allow(clippy::too_many_arguments)]
pub fn build_certificate<R: Real>(
    family: &LossFamily<R>,
    constants: &FamilyConstants<R>,
    p_ref: &EmpiricalDistribution<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    delta: R,
    n_list: &[u64],
    tie_tol: Option<R>,
) -> Result<CertificateBundle<R>> {
    let tie_tol = tie_tol.unwrap_or_else(|| InnerMaxOptions::default_tie_tol(constants.sup_norm));
    let view = family.grid_family();
    let rho_crit = critical_radius(&view, p_ref, cost, space, tie_tol)?;
    let lambda_low = lambda_low_numeric(&view, p_ref, cost, space, tie_tol)?;
    let (alpha, beta) =
        generalization_constants(lambda_low, constants.sup_norm, constants.dudley, delta)?;
    let n_min = n_min_standard(alpha, beta, rho_crit)?;

    let mut certified = true;
    for k in 0..=8u32 {
        let l = R::of(2.0) * lambda_low * R::from_u32(k).unwrap() / R::of(8.0);
        let v = rho_max_at(&view, p_ref, cost, space, l, tie_tol)?;
        if v < rho_crit / R::of(4.0) - R::of(1e-9) {
            certified = false;
        }
    }

    let rho_admissible_lower = n_list
        .iter()
        .map(|&n| (n, alpha / R::from_u64(n).unwrap().sqrt()))
        .collect();

    Ok(CertificateBundle {
        rho_crit,
        lambda_low,
        dudley: constants.dudley,
        sup_norm: constants.sup_norm,
        lip_xi: constants.lip_xi,
        lip_theta: constants.lip_theta,
        alpha,
        beta,
        n_min,
        delta,
        rho_admissible_lower,
        lambda_low_certified: certified,
        constants_source: constants.source,
        tie_tol,
        grid_resolution: space.grid_resolution(),
        theta_members: view.member_count(),
    })
}

/// Certificate for the doubly regularized guarantee. Flagged vacuous when
/// `ρ_crit^{τ,ε} ≤ 4 m_c`, in which case no sample-size threshold exists.
#[derive(Debug, Clone, Serialize)]
pub struct RegCertificateBundle<R> {
    pub rho: R,
    pub tau: R,
    pub epsilon: R,
    pub rho_crit_reg: R,
    pub m_c: R,
    pub m_2c: R,
    pub lambda_low_reg: R,
    pub lambda_up: R,
    pub alpha_reg: R,
    pub beta_reg: R,
    pub n_min_reg: Option<R>,
    pub vacuous: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn build_reg_certificate<R: Real>(
    family: &LossFamily<R>,
    constants: &FamilyConstants<R>,
    p_ref: &EmpiricalDistribution<R>,
    kernel: &ReferenceKernel<R>,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    reg: &RegParams<R>,
    rho: R,
    delta: R,
) -> Result<RegCertificateBundle<R>> {
    let moments = kernel_moments(kernel, cost, space)?;
    let view = family.grid_family();
    let rho_crit_reg = reg_critical_radius(&view, p_ref, kernel, cost, space, reg)?;
    let vacuous = rho_crit_reg <= R::of(4.0) * moments.m_c;
    let lambda_low_reg = lambda_low_reg_closed_form(
        constants.sup_norm,
        moments.m_c,
        moments.m_2c,
        rho,
        rho_crit_reg,
        reg,
    )?;
    let up = lambda_up(rho, constants.sup_norm, moments.m_c)?;
    let (alpha_reg, beta_reg) = reg_generalization_constants(
        lambda_low_reg,
        constants.sup_norm,
        constants.dudley,
        moments.m_c,
        rho,
        reg,
        delta,
    )?;
    let n_min_reg = if vacuous {
        None
    } else {
        let s = alpha_reg + beta_reg;
        let d = rho_crit_reg - R::of(4.0) * moments.m_c;
        Some(R::of(16.0) * s * s / (d * d))
    };
    Ok(RegCertificateBundle {
        rho,
        tau: reg.tau,
        epsilon: reg.epsilon,
        rho_crit_reg,
        m_c: moments.m_c,
        m_2c: moments.m_2c,
        lambda_low_reg,
        lambda_up: up,
        alpha_reg,
        beta_reg,
        n_min_reg,
        vacuous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::FnFamily;
    use crate::reg::KernelKind;

    fn unit_space(res: usize) -> SampleSpace<f64> {
        SampleSpace::new(vec![(0.0, 1.0)], vec![], res).unwrap()
    }

    fn sq_cost() -> TransportCost<f64> {
        TransportCost::new(2.0, 2.0, 0.0, 1.0).unwrap()
    }

    fn identity_family() -> FnFamily<f64> {
        FnFamily::single(|p: &SamplePoint<f64>| p.continuous[0], true)
    }

    fn dirac_zero() -> EmpiricalDistribution<f64> {
        EmpiricalDistribution::dirac(SamplePoint::scalar(0.0))
    }

    #[test]
    fn critical_radius_identity() {
        let space = unit_space(41);
        let v = critical_radius(&identity_family(), &dirac_zero(), &sq_cost(), &space, 1e-9)
            .unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn critical_radius_vanishes_with_constant_member() {
        let space = unit_space(21);
        let fam = FnFamily::new(
            vec![
                Box::new(|p: &SamplePoint<f64>| p.continuous[0]),
                Box::new(|_: &SamplePoint<f64>| 0.7),
            ],
            false,
        );
        let p_ref = EmpiricalDistribution::uniform(space.grid()).unwrap();
        let v = critical_radius(&fam, &p_ref, &sq_cost(), &space, 1e-9).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn rho_max_curve_identity_matches_closed_form() {
        let space = unit_space(41);
        let fam = identity_family();
        let p = dirac_zero();
        let grid: Vec<f64> = vec![0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0, 1.5, 2.0, 4.0];
        let curve = rho_max_curve(&fam, &p, &sq_cost(), &space, &grid, 1e-9).unwrap();
        let rc = critical_radius(&fam, &p, &sq_cost(), &space, 1e-9).unwrap();
        assert!((curve[0].1 - rc).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for &(l, v) in &curve {
            assert!(v <= prev + 1e-9, "curve not nonincreasing at {l}");
            prev = v;
            let expected = if l <= 0.5 { 1.0 } else { 1.0 / (4.0 * l * l) };
            assert!(
                (v - expected).abs() < 1e-6,
                "rho_max({l}) = {v}, expected {expected}"
            );
        }
    }

    #[test]
    fn lambda_low_identity_is_half() {
        let space = unit_space(41);
        let v = lambda_low_numeric(&identity_family(), &dirac_zero(), &sq_cost(), &space, 1e-9)
            .unwrap();
        assert!((v - 0.5).abs() < 1e-4, "lambda_low = {v}");
    }

    #[test]
    fn lambda_low_bisection_certificate() {
        let space = unit_space(41);
        let fam = identity_family();
        let p = dirac_zero();
        let cost = sq_cost();
        let rc = critical_radius(&fam, &p, &cost, &space, 1e-9).unwrap();
        let ll = lambda_low_numeric(&fam, &p, &cost, &space, 1e-9).unwrap();
        let target = rc / 4.0;
        let at = |l: f64| rho_max_at(&fam, &p, &cost, &space, l, 1e-9).unwrap();
        assert!(at(2.0 * ll) >= target - 1e-9);
        assert!(at(2.0 * ll * (1.0 + 1e-3)) < target + 1e-6);
    }

    #[test]
    fn lambda_low_rejects_constant_family() {
        let space = unit_space(11);
        let fam = FnFamily::single(|_: &SamplePoint<f64>| 1.0, false);
        let err = lambda_low_numeric(&fam, &dirac_zero(), &sq_cost(), &space, 1e-9).unwrap_err();
        assert!(matches!(err, Error::DegenerateFamily));
    }

    #[test]
    fn generalization_constants_worked_examples() {
        let delta = 2.0 * (-2.0f64).exp();
        let (alpha, beta) = generalization_constants(1.0, 1.0, 1.0, delta).unwrap();
        assert!((alpha - 292.0).abs() < 1e-9, "alpha = {alpha}");
        let beta_expected = 96.0 + 4.0 * (2.0 * (2.0f64.ln() + 2.0)).sqrt();
        assert!((beta - beta_expected).abs() < 1e-12);
        assert!((beta - 105.284).abs() < 1e-3, "beta = {beta}");

        // alpha strictly decreasing in lambda_low
        let mut prev = f64::INFINITY;
        for ll in [0.5, 1.0, 2.0] {
            let (a, _) = generalization_constants(ll, 1.0, 1.0, delta).unwrap();
            assert!(a < prev);
            prev = a;
        }
        assert!(generalization_constants(1.0, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn n_min_examples() {
        let delta = 2.0 * (-2.0f64).exp();
        let (alpha, beta) = generalization_constants(1.0, 1.0, 1.0, delta).unwrap();
        let n = n_min_standard(alpha, beta, 1.0).unwrap();
        assert!((n - 2.5253e6).abs() < 1e3, "n_min = {n}");
        let n2: f64 = n_min_standard(alpha, beta, 2.0).unwrap();
        assert!((n / n2 - 4.0).abs() < 1e-9);
        let zero: f64 = n_min_standard(0.0, 0.0, 1.0).unwrap();
        assert!(zero.abs() < 1e-300);
        assert!(n_min_standard(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn reg_critical_radius_constant_loss() {
        // tau = 0 and constant f: Gibbs = pi0, so the radius is E_P E_pi0[c]
        let space = unit_space(11);
        let kernel = ReferenceKernel::new(KernelKind::Uniform, 4001).unwrap();
        let fam = FnFamily::single(|_: &SamplePoint<f64>| 0.3, false);
        let reg = RegParams::entropic(1.0).unwrap();
        let v = reg_critical_radius(&fam, &dirac_zero(), &kernel, &sq_cost(), &space, &reg)
            .unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-3, "v = {v}");

        // epsilon large: the Gibbs tilt flattens back to pi0
        let fam2 = FnFamily::single(|p: &SamplePoint<f64>| p.continuous[0], false);
        let reg_large = RegParams::entropic(1e6).unwrap();
        let v2 = reg_critical_radius(&fam2, &dirac_zero(), &kernel, &sq_cost(), &space, &reg_large)
            .unwrap();
        assert!((v2 - 1.0 / 3.0).abs() < 2e-3, "v2 = {v2}");
    }

    #[test]
    fn reg_critical_radius_matches_direct_summation() {
        let space = unit_space(9);
        let kernel = ReferenceKernel::new(KernelKind::TruncatedGaussian { sigma: 0.4 }, 9)
            .unwrap();
        let cost = sq_cost();
        let reg = RegParams::new(0.3, 0.7).unwrap();
        let fam = FnFamily::single(|p: &SamplePoint<f64>| 0.8 * p.continuous[0] - 0.2, false);
        let p_ref = EmpiricalDistribution::uniform(vec![
            SamplePoint::scalar(0.0),
            SamplePoint::scalar(0.5),
            SamplePoint::scalar(1.0),
        ])
        .unwrap();
        let v = reg_critical_radius(&fam, &p_ref, &kernel, &cost, &space, &reg).unwrap();

        // direct naive re-summation (no max shift)
        let quad = KernelQuadrature::new(&kernel, &space).unwrap();
        let f = |p: &SamplePoint<f64>| 0.8 * p.continuous[0] - 0.2;
        let mut oracle = 0.0;
        for (atom, &w) in p_ref.atoms.iter().zip(p_ref.weights.iter()) {
            let weights = quad.weights(atom);
            let z: f64 = quad
                .nodes()
                .iter()
                .zip(weights.iter())
                .map(|(n, &wk)| wk * (f(n) / reg.epsilon).exp())
                .sum();
            let tilted: f64 = quad
                .nodes()
                .iter()
                .zip(weights.iter())
                .map(|(n, &wk)| {
                    wk * (f(n) / reg.epsilon).exp() / z
                        * (reg.tau / reg.epsilon * f(n) + cost.eval_unchecked(atom, n))
                })
                .sum();
            oracle += w * (tilted - reg.tau * z.ln());
        }
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
    }

    #[test]
    fn lambda_low_reg_worked_example() {
        // tau = 0, sup = 1, eps = 1, m_c = 1/3, m_2c = 1/5, rho = 0.5 + 1/3
        let reg = RegParams::entropic(1.0).unwrap();
        let v: f64 = lambda_low_reg_closed_form(1.0, 1.0 / 3.0, 0.2, 0.5 + 1.0 / 3.0, 1.0 / 3.0, &reg)
            .unwrap();
        assert!((v - 0.0606).abs() < 5e-4, "lambda_low_reg = {v}");

        // linear in rho_crit_reg
        let v2: f64 = lambda_low_reg_closed_form(1.0, 1.0 / 3.0, 0.2, 0.5 + 1.0 / 3.0, 2.0 / 3.0, &reg)
            .unwrap();
        assert!((v2 / v - 2.0).abs() < 1e-9);

        assert!(lambda_low_reg_closed_form(1.0, 0.5, 0.2, 0.4, 1.0, &reg).is_err());
    }

    #[test]
    fn lambda_low_reg_decays_exponentially_in_inv_epsilon() {
        // log lambda_low should fall roughly like -sup/eps as eps shrinks
        let mut logs = Vec::new();
        for eps in [1.0, 0.5, 0.25] {
            let reg = RegParams::entropic(eps).unwrap();
            let v: f64 = lambda_low_reg_closed_form(1.0, 0.1, 0.2, 1.0, 0.5, &reg).unwrap();
            logs.push((1.0 / eps, v.ln()));
        }
        // slopes of log(lambda) against 1/eps around -sup_norm = -1
        for w in logs.windows(2) {
            let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            assert!(slope < -0.5, "slope {slope} not steeply negative");
        }
    }

    #[test]
    fn reg_constants_collapse_to_standard() {
        let delta = 0.05;
        let reg = RegParams::entropic(1.0).unwrap();
        let (a, b): (f64, f64) = generalization_constants(0.7, 1.3, 0.9, delta).unwrap();
        let (ar, br) =
            reg_generalization_constants(0.7, 1.3, 0.9, 0.0, 0.5, &reg, delta).unwrap();
        assert!((a - ar).abs() < 1e-12);
        assert!((b - br).abs() < 1e-12);
    }

    #[test]
    fn reg_alpha_worked_example() {
        let delta = 2.0 * (-2.0f64).exp();
        let reg = RegParams::entropic(1.0).unwrap();
        let (alpha, _) =
            reg_generalization_constants(1.0, 1.0, 1.0, 1.0 / 3.0, 4.0 / 3.0, &reg, delta)
                .unwrap();
        assert!((alpha - (384.0 + 14.0 / 3.0)).abs() < 1e-9, "alpha = {alpha}");

        // both constants decrease as the dual lower bound grows
        let (a1, b1) =
            reg_generalization_constants(0.5, 1.0, 1.0, 0.2, 1.0, &reg, delta).unwrap();
        let (a2, b2) =
            reg_generalization_constants(1.0, 1.0, 1.0, 0.2, 1.0, &reg, delta).unwrap();
        assert!(a2 < a1 && b2 < b1);
    }

    #[test]
    fn linear_model_constant_examples() {
        let (rc, ll) =
            linear_model_constants(LinearModelKind::LinearRegression, 2.0, 4.0, 1.0).unwrap();
        assert_eq!((rc, ll), (1.0, 1.0));

        let (rc, ll) =
            linear_model_constants(LinearModelKind::LogisticRegression, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(rc, 1.0);
        assert!((ll - 1.0 / (8.0 * (1.0 + std::f64::consts::E))).abs() < 1e-12);
        assert!((ll - 0.033634).abs() < 5e-5);

        // exponent zero
        let (_, ll): (f64, f64) =
            linear_model_constants(LinearModelKind::LogisticRegression, 1.0, 0.0, 1.0).unwrap();
        assert!((ll - 1.0 / 16.0).abs() < 1e-12);

        assert!(linear_model_constants(LinearModelKind::LinearRegression, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn degeneracy_identity_examples() {
        let space = unit_space(41);
        let fam = identity_family();
        let p = dirac_zero();
        let cost = sq_cost();
        let report = degeneracy_check(&fam, &p, 1.0, &cost, &space, 1e-6).unwrap();
        assert!(report.degenerate, "gap = {}", report.min_gap);

        let report = degeneracy_check(&fam, &p, 0.25, &cost, &space, 1e-6).unwrap();
        assert!(!report.degenerate);
        assert!((report.min_gap - 0.5).abs() < 1e-6);

        let const_fam = FnFamily::single(|_: &SamplePoint<f64>| 0.4, false);
        let report = degeneracy_check(&const_fam, &p, 0.3, &cost, &space, 1e-6).unwrap();
        assert!(report.degenerate);
    }

    #[test]
    fn vacuous_flag_matches_threshold() {
        let space = unit_space(11);
        let kernel = ReferenceKernel::new(KernelKind::Uniform, 201).unwrap();
        let cost = sq_cost();
        let reg = RegParams::entropic(0.25).unwrap();
        let moments = kernel_moments(&kernel, &cost, &space).unwrap();
        let fam = FnFamily::single(|p: &SamplePoint<f64>| p.continuous[0], false);
        let rc_reg =
            reg_critical_radius(&fam, &dirac_zero(), &kernel, &cost, &space, &reg).unwrap();
        // uniform kernel has a large m_c (1/3), so this instance is vacuous
        assert!(rc_reg <= 4.0 * moments.m_c);
    }
}
