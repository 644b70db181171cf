//! The robust risk `R_{ρ,Q}(f) = inf_{λ≥0} { λρ + E_Q[φ(λ,f,ξ)] }`: 1-D
//! convex dual solver, brute-force primal oracle, worst-case distribution
//! recovery, robust training over a θ-grid, and the excess-risk check.

use crate::dual::{inner_max_on, InnerMaxOptions};
use crate::error::{Error, Result};
use crate::losses::LossFamily;
use crate::opt::golden_min;
use crate::scalar::Real;
use crate::simplex::{simplex_max, vertex_enumeration_max, StandardLp};
use crate::space::{SamplePoint, SampleSpace, TransportCost};

/// Hard cap on the dual bracket growth; beyond it the objective is declared
/// flat at infinity (discretization can flatten a coercive objective).
const LAMBDA_CAP: f64 = 1e8;

/// Finitely supported distribution with positive weights summing to one.
#[derive(Debug, Clone)]
pub struct EmpiricalDistribution<R> {
    pub atoms: Vec<SamplePoint<R>>,
    pub weights: Vec<R>,
}

impl<R: Real> EmpiricalDistribution<R> {
    pub fn new(atoms: Vec<SamplePoint<R>>, weights: Vec<R>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::Empty("empirical distribution"));
        }
        if weights.iter().any(|w| !(*w > R::zero())) {
            return Err(Error::InvalidParameter(
                "empirical weights must be positive".into(),
            ));
        }
        let total: R = weights.iter().copied().sum();
        if (total - R::one()).abs() > R::of(1e-12) {
            return Err(Error::InvalidParameter(format!(
                "empirical weights sum to {} instead of 1",
                total.lossy()
            )));
        }
        Ok(Self { atoms, weights })
    }

    pub fn dirac(atom: SamplePoint<R>) -> Self {
        Self {
            atoms: vec![atom],
            weights: vec![R::one()],
        }
    }

    pub fn uniform(atoms: Vec<SamplePoint<R>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("empirical distribution"));
        }
        let w = R::one() / R::from_usize(atoms.len()).unwrap();
        let weights = vec![w; atoms.len()];
        Ok(Self { atoms, weights })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean<F: Fn(&SamplePoint<R>) -> R>(&self, f: F) -> R {
        self.atoms
            .iter()
            .zip(self.weights.iter())
            .map(|(a, &w)| w * f(a))
            .sum()
    }
}

/// Outcome of the 1-D dual minimization.
#[derive(Debug, Clone)]
pub struct DualSolveResult<R> {
    pub lambda_star: R,
    pub value: R,
    /// Interval certified (by convexity) to contain a minimizer.
    pub bracket: (R, R),
    pub evaluations: usize,
    /// Bracket growth hit the cap while still descending.
    pub flat_at_cap: bool,
}

/// Approximate worst-case distribution within the budget.
#[derive(Debug, Clone)]
pub struct WorstCaseDistribution<R> {
    pub atoms: Vec<SamplePoint<R>>,
    pub weights: Vec<R>,
    pub transport_cost_used: R,
}

/// Precomputed `f` and cost tables shared by every λ probe.
struct PhiTable<'a, R, F> {
    f: &'a F,
    cost: &'a TransportCost<R>,
    space: &'a SampleSpace<R>,
    nodes: &'a [SamplePoint<R>],
    node_f: Vec<R>,
    atoms: &'a [SamplePoint<R>],
    atom_f: Vec<R>,
    atom_costs: Vec<Vec<R>>,
    opts: InnerMaxOptions<R>,
}

impl<'a, R: Real, F: Fn(&SamplePoint<R>) -> R> PhiTable<'a, R, F> {
    fn new(
        f: &'a F,
        cost: &'a TransportCost<R>,
        space: &'a SampleSpace<R>,
        nodes: &'a [SamplePoint<R>],
        atoms: &'a [SamplePoint<R>],
        opts: InnerMaxOptions<R>,
    ) -> Self {
        let node_f = nodes.iter().map(f).collect();
        let atom_f = atoms.iter().map(f).collect();
        let atom_costs = atoms
            .iter()
            .map(|a| nodes.iter().map(|n| cost.eval_unchecked(a, n)).collect())
            .collect();
        Self {
            f,
            cost,
            space,
            nodes,
            node_f,
            atoms,
            atom_f,
            atom_costs,
            opts,
        }
    }

    /// `φ(λ, f, ξ_i)` over the candidate set, with optional refinement.
    fn phi(&self, i: usize, lambda: R) -> R {
        let costs = &self.atom_costs[i];
        let mut best = self.atom_f[i];
        let mut best_node = None;
        for (j, (&fj, &cj)) in self.node_f.iter().zip(costs.iter()).enumerate() {
            let g = fj - lambda * cj;
            if g > best {
                best = g;
                best_node = Some(j);
            }
        }
        if self.opts.refine && lambda > R::zero() {
            let start = match best_node {
                Some(j) => &self.nodes[j],
                None => &self.atoms[i],
            };
            let xi = &self.atoms[i];
            let refined = crate::dual::refine_gain(
                &|zeta: &SamplePoint<R>| {
                    (self.f)(zeta) - lambda * self.cost.eval_unchecked(xi, zeta)
                },
                start,
                self.space,
                self.opts.refine_iters,
            );
            if refined.1 > best {
                best = refined.1;
            }
        }
        best
    }
}

/// `λρ + Σ_i w_i φ(λ, f, ξ_i)`.
pub fn dual_objective<R, F>(
    lambda: R,
    q: &EmpiricalDistribution<R>,
    f: F,
    rho: R,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    opts: &InnerMaxOptions<R>,
) -> Result<R>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if lambda < R::zero() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if rho < R::zero() {
        return Err(Error::RadiusNegative { rho: rho.lossy() });
    }
    for atom in &q.atoms {
        space.contains(atom)?;
    }
    let nodes = space.grid();
    let table = PhiTable::new(&f, cost, space, &nodes, &q.atoms, *opts);
    let mut acc = lambda * rho;
    for (i, &w) in q.weights.iter().enumerate() {
        acc = acc + w * table.phi(i, lambda);
    }
    Ok(acc)
}

/// Minimizes the convex dual objective over `λ ∈ [0, ∞)`: the bracket grows
/// by doubling from 1 until the objective stops decreasing, then
/// golden-section shrinks it to width `tol`. The returned value is the
/// minimum over every probed λ.
pub fn solve_dual<R, F>(
    q: &EmpiricalDistribution<R>,
    f: F,
    rho: R,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    tol: R,
    opts: &InnerMaxOptions<R>,
) -> Result<DualSolveResult<R>>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if !(rho > R::zero()) {
        return Err(Error::RadiusNotPositive { rho: rho.lossy() });
    }
    if !(tol > R::zero()) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    for atom in &q.atoms {
        space.contains(atom)?;
    }
    let nodes = space.grid();
    let table = PhiTable::new(&f, cost, space, &nodes, &q.atoms, *opts);

    let mut evaluations = 0usize;
    let mut best_lambda = R::zero();
    let mut best_value = R::infinity();
    let mut objective = |lambda: R| -> Result<R> {
        evaluations += 1;
        let mut acc = lambda * rho;
        for (i, &w) in q.weights.iter().enumerate() {
            acc = acc + w * table.phi(i, lambda);
        }
        if !acc.is_finite() {
            return Err(Error::NonFinite {
                what: format!("dual objective at lambda = {lambda}"),
            });
        }
        if acc < best_value {
            best_value = acc;
            best_lambda = lambda;
        }
        Ok(acc)
    };

    let cap = R::of(LAMBDA_CAP);
    let mut hi = R::one();
    let mut g_prev = objective(R::zero())?;
    let mut g_hi = objective(hi)?;
    let mut flat_at_cap = false;
    while g_hi < g_prev {
        if hi >= cap {
            flat_at_cap = true;
            break;
        }
        hi = (hi + hi).min(cap);
        g_prev = g_hi;
        g_hi = objective(hi)?;
    }

    let bracket = if flat_at_cap {
        (hi.half(), hi)
    } else {
        let res = golden_min(
            |l| objective(l).unwrap_or(R::infinity()),
            R::zero(),
            hi,
            tol,
            400,
        );
        res.bracket
    };

    Ok(DualSolveResult {
        lambda_star: best_lambda,
        value: best_value,
        bracket,
        evaluations,
        flat_at_cap,
    })
}

/// Robust risk: dual value for `ρ > 0`, plain expectation for `ρ = 0`.
pub fn robust_risk<R, F>(
    q: &EmpiricalDistribution<R>,
    f: F,
    rho: R,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    tol: R,
    opts: &InnerMaxOptions<R>,
) -> Result<R>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if rho < R::zero() {
        return Err(Error::RadiusNegative { rho: rho.lossy() });
    }
    if rho == R::zero() {
        return Ok(q.mean(&f));
    }
    Ok(solve_dual(q, f, rho, cost, space, tol, opts)?.value)
}

/// Exact primal transport LP over the grid:
/// `max Σ_ij π_ij f(ζ_j)` s.t. row sums `w_i`, total cost ≤ ρ, `π ≥ 0`.
/// Solved by vertex enumeration when `atoms × nodes ≤ 12` and by the dense
/// simplex routine otherwise. Atoms must sit on grid nodes.
pub fn primal_oracle<R, F>(
    q: &EmpiricalDistribution<R>,
    f: F,
    rho: R,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
) -> Result<R>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if rho < R::zero() {
        return Err(Error::RadiusNegative { rho: rho.lossy() });
    }
    let nodes = space.grid();
    let atom_node: Vec<usize> = q
        .atoms
        .iter()
        .map(|a| {
            nodes
                .iter()
                .position(|n| points_match(a, n))
                .ok_or_else(|| {
                    Error::InvalidParameter(
                        "primal oracle requires atoms on the space grid".into(),
                    )
                })
        })
        .collect::<Result<_>>()?;

    let n_atoms = q.len();
    let n_nodes = nodes.len();
    let n_vars = n_atoms * n_nodes;
    let n = n_vars + 1; // plus budget slack
    let node_f: Vec<R> = nodes.iter().map(f).collect();

    let mut objective = vec![R::zero(); n];
    let mut constraints = vec![vec![R::zero(); n]; n_atoms + 1];
    for i in 0..n_atoms {
        for j in 0..n_nodes {
            let col = i * n_nodes + j;
            objective[col] = node_f[j];
            constraints[i][col] = R::one();
            constraints[n_atoms][col] = cost.eval_unchecked(&q.atoms[i], &nodes[j]);
        }
    }
    constraints[n_atoms][n - 1] = R::one();
    let mut rhs: Vec<R> = q.weights.clone();
    rhs.push(rho);

    let lp = StandardLp {
        objective,
        constraints,
        rhs,
    };
    if n_vars <= 12 {
        vertex_enumeration_max(&lp)
    } else {
        let mut basis: Vec<usize> = (0..n_atoms).map(|i| i * n_nodes + atom_node[i]).collect();
        basis.push(n - 1);
        simplex_max(&lp, basis)
    }
}

fn points_match<R: Real>(a: &SamplePoint<R>, b: &SamplePoint<R>) -> bool {
    a.labels == b.labels
        && a.continuous.len() == b.continuous.len()
        && a.continuous
            .iter()
            .zip(b.continuous.iter())
            .all(|(&x, &y)| (x - y).abs() <= R::of(1e-12) * (R::one() + x.abs()))
}

/// Recovers a feasible near-worst-case distribution from the dual solution.
///
/// Candidate destinations per atom are the grid nodes plus the argmax set of
/// `f − λ* c(ξ_i, ·)` (which contributes the golden-refined maximizer for
/// smooth members). Mass is routed by the exact greedy for this transport
/// LP: each atom's `(cost, loss)` candidates are reduced to their concave
/// frontier and the incremental frontier segments are consumed globally in
/// order of gain per unit cost until the budget binds. At most one atom ends
/// split between two destinations.
pub fn worst_case_distribution<R, F>(
    q: &EmpiricalDistribution<R>,
    f: F,
    rho: R,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    tol: R,
    opts: &InnerMaxOptions<R>,
) -> Result<WorstCaseDistribution<R>>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if rho < R::zero() {
        return Err(Error::RadiusNegative { rho: rho.lossy() });
    }
    if rho == R::zero() {
        return Ok(WorstCaseDistribution {
            atoms: q.atoms.clone(),
            weights: q.weights.clone(),
            transport_cost_used: R::zero(),
        });
    }
    let solve = solve_dual(q, &f, rho, cost, space, tol, opts)?;
    let lambda = solve.lambda_star;
    let nodes = space.grid();

    // concave (cost, value) frontier per atom, starting from staying put
    let mut frontiers: Vec<Vec<(R, R, SamplePoint<R>)>> = Vec::with_capacity(q.len());
    for xi in &q.atoms {
        let mut candidates: Vec<(R, R, SamplePoint<R>)> = Vec::with_capacity(nodes.len() + 2);
        candidates.push((R::zero(), f(xi), xi.clone()));
        for node in &nodes {
            candidates.push((cost.eval_unchecked(xi, node), f(node), node.clone()));
        }
        let argmax = inner_max_on(&f, lambda, xi, cost, &nodes, space, opts)?;
        for m in argmax.maximizers {
            candidates.push((cost.eval_unchecked(xi, &m), f(&m), m));
        }
        candidates.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal))
        });
        // strictly improving points only, then an upper concave envelope
        let mut frontier: Vec<(R, R, SamplePoint<R>)> = Vec::new();
        for (c, v, p) in candidates {
            if let Some(last) = frontier.last() {
                if v <= last.1 {
                    continue;
                }
            }
            while frontier.len() >= 2 {
                let a = &frontier[frontier.len() - 2];
                let b = &frontier[frontier.len() - 1];
                // drop b if (a -> b -> new) is not concave
                let lhs = (b.1 - a.1) * (c - b.0);
                let rhs = (v - b.1) * (b.0 - a.0);
                if lhs <= rhs {
                    frontier.pop();
                } else {
                    break;
                }
            }
            frontier.push((c, v, p));
        }
        frontiers.push(frontier);
    }

    // incremental frontier segments, best gain per unit cost first
    struct Segment<R> {
        slope: R,
        atom: usize,
        step: usize,
    }
    let mut segments: Vec<Segment<R>> = Vec::new();
    for (atom, frontier) in frontiers.iter().enumerate() {
        for step in 1..frontier.len() {
            let dc = frontier[step].0 - frontier[step - 1].0;
            let dv = frontier[step].1 - frontier[step - 1].1;
            let slope = if dc == R::zero() { R::infinity() } else { dv / dc };
            segments.push(Segment { slope, atom, step });
        }
    }
    segments.sort_by(|a, b| {
        b.slope
            .partial_cmp(&a.slope)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.atom.cmp(&b.atom))
            .then(a.step.cmp(&b.step))
    });

    let mut position = vec![0usize; q.len()];
    let mut partial: Vec<Option<(usize, R)>> = vec![None; q.len()];
    let mut budget = rho;
    // rounding residues of fully consumed segments do not count as budget
    let budget_floor = rho * R::of(1e-12);
    let mut used = R::zero();
    for seg in segments {
        if budget <= budget_floor {
            break;
        }
        // segments of one atom arrive in frontier order by concavity
        debug_assert_eq!(position[seg.atom], seg.step - 1);
        let w = q.weights[seg.atom];
        let frontier = &frontiers[seg.atom];
        let dc = frontier[seg.step].0 - frontier[seg.step - 1].0;
        let full = w * dc;
        if dc == R::zero() || full <= budget {
            position[seg.atom] = seg.step;
            budget = budget - full;
            used = used + full;
        } else {
            let t = budget / full;
            partial[seg.atom] = Some((seg.step, t));
            used = used + budget;
            budget = R::zero();
        }
    }

    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let floor = R::of(1e-15);
    for i in 0..q.len() {
        let w = q.weights[i];
        let frontier = &frontiers[i];
        match partial[i] {
            Some((step, t)) => {
                let stay = w * (R::one() - t);
                if stay > floor {
                    atoms.push(frontier[step - 1].2.clone());
                    weights.push(stay);
                }
                let moved = w * t;
                if moved > floor {
                    atoms.push(frontier[step].2.clone());
                    weights.push(moved);
                }
            }
            None => {
                atoms.push(frontier[position[i]].2.clone());
                weights.push(w);
            }
        }
    }
    Ok(WorstCaseDistribution {
        atoms,
        weights,
        transport_cost_used: used,
    })
}

/// Grid ERM over θ: the member minimizing the robust risk, ties broken by
/// the lexicographically smallest θ (grid order).
pub fn train_robust<R: Real>(
    q: &EmpiricalDistribution<R>,
    family: &LossFamily<R>,
    rho: R,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    tol: R,
) -> Result<(Vec<R>, R)> {
    let thetas = family.theta_grid();
    if thetas.is_empty() {
        return Err(Error::Empty("theta grid"));
    }
    let opts = InnerMaxOptions::new(R::of(1e-9), family.refine_inner());
    let mut best: Option<(Vec<R>, R)> = None;
    for theta in thetas {
        let value = robust_risk(
            q,
            |p: &SamplePoint<R>| family.eval_unchecked(&theta, p),
            rho,
            cost,
            space,
            tol,
            &opts,
        )?;
        let replace = match &best {
            None => true,
            Some((_, v)) => value < *v,
        };
        if replace {
            best = Some((theta, value));
        }
    }
    Ok(best.expect("nonempty theta grid"))
}

/// Two sides of the excess-risk inequality
/// `R̂_ρ(f) ≤ true_mean + lip (ρ + a_n)^{1/p}`.
#[derive(Debug, Clone)]
pub struct ExcessGapReport<R> {
    pub lhs: R,
    pub rhs: R,
    pub slack: R,
    pub holds: bool,
}

/// Evaluates the excess-risk bound for a pure power-of-distance cost
/// (`c = d^p`); spaces with effective label axes are rejected.
#[allow(clippy::too_many_arguments)]
pub fn excess_gap_check<R, F>(
    q: &EmpiricalDistribution<R>,
    f: F,
    rho: R,
    alpha_over_sqrt_n: R,
    lip_f: R,
    power_p: R,
    true_mean: R,
    cost: &TransportCost<R>,
    space: &SampleSpace<R>,
    tol: R,
    opts: &InnerMaxOptions<R>,
) -> Result<ExcessGapReport<R>>
where
    R: Real,
    F: Fn(&SamplePoint<R>) -> R,
{
    if lip_f < R::zero() {
        return Err(Error::InvalidParameter("lip_f must be nonnegative".into()));
    }
    if space.alphabets().iter().any(|&a| a > 1) {
        return Err(Error::MixedCost);
    }
    if (cost.power_q - power_p).abs() > R::of(1e-12) {
        return Err(Error::InvalidParameter(format!(
            "declared power p = {power_p} does not match the cost exponent q = {}",
            cost.power_q
        )));
    }
    let lhs = robust_risk(q, f, rho, cost, space, tol, opts)?;
    let rhs = true_mean + lip_f * (rho + alpha_over_sqrt_n).powf(power_p.recip());
    let slack = rhs - lhs;
    Ok(ExcessGapReport {
        lhs,
        rhs,
        slack,
        holds: slack >= -R::of(1e-9),
    })
}
