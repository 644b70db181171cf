//! Cross-module invariants: strong duality against the primal LP oracle,
//! dense-scan equivalence of the 1-D dual solver, shape properties of the
//! robust risk in ρ, and worst-case distribution recovery.

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use wdrocert_core::certificates::{critical_radius, degeneracy_check, lambda_low_numeric};
use wdrocert_core::dual::InnerMaxOptions;
use wdrocert_core::losses::{FnFamily, LossFamily};
use wdrocert_core::risk::{
    dual_objective, primal_oracle, robust_risk, solve_dual, worst_case_distribution,
    EmpiricalDistribution,
};
use wdrocert_core::space::{cost_eval, SamplePoint, SampleSpace, TransportCost};

fn sq_cost() -> TransportCost<f64> {
    TransportCost::new(2.0, 2.0, 0.0, 1.0).unwrap()
}

type BoxedLoss = Box<dyn Fn(&SamplePoint<f64>) -> f64 + Sync>;

struct SmallInstance {
    space: SampleSpace<f64>,
    cost: TransportCost<f64>,
    q: EmpiricalDistribution<f64>,
    f: BoxedLoss,
    rho: f64,
    sup_norm: f64,
}

/// Random instance with at most 4 atoms (on grid) and at most 7 grid nodes.
fn random_small_instance(rng: &mut StdRng) -> SmallInstance {
    let with_label = rng.random::<f64>() < 0.4;
    let (space, cost) = if with_label {
        (
            SampleSpace::new(vec![(0.0, 1.0)], vec![2], 3).unwrap(),
            TransportCost::new(2.0, 2.0, 0.7, 1.0).unwrap(),
        )
    } else {
        let res = rng.random_range(5..=7usize);
        (
            SampleSpace::new(vec![(0.0, 1.0)], vec![], res).unwrap(),
            sq_cost(),
        )
    };
    let a = rng.random_range(-1.0..1.0);
    let b = rng.random_range(-1.0..1.0);
    let c = rng.random_range(-1.0..1.0);
    let d = rng.random_range(-0.5..0.5);
    let label_shift = rng.random_range(-0.5..0.5);
    let f = move |p: &SamplePoint<f64>| {
        let x = p.continuous[0];
        let base = a + b * x + c * x * x + d * x * x * x;
        if p.labels.first().copied() == Some(1) {
            base + label_shift
        } else {
            base
        }
    };
    let nodes = space.grid();
    let sup_norm = nodes.iter().map(|n| f(n).abs()).fold(0.0, f64::max);
    let n_atoms = rng.random_range(1..=4usize);
    let atoms: Vec<SamplePoint<f64>> = (0..n_atoms)
        .map(|_| nodes[rng.random_range(0..nodes.len())].clone())
        .collect();
    let mut weights: Vec<f64> = (0..n_atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let q = EmpiricalDistribution::new(atoms, weights).unwrap();
    let rho = rng.random_range(0.01..1.5);
    SmallInstance {
        space,
        cost,
        q,
        f: Box::new(f),
        rho,
        sup_norm,
    }
}

#[test]
fn strong_duality_on_small_instances() {
    let mut rng = StdRng::seed_from_u64(20260809);
    let opts = InnerMaxOptions::new(1e-9, false);
    for trial in 0..100 {
        let inst = random_small_instance(&mut rng);
        let dual = solve_dual(
            &inst.q,
            &inst.f,
            inst.rho,
            &inst.cost,
            &inst.space,
            1e-9,
            &opts,
        )
        .unwrap()
        .value;
        let primal = primal_oracle(&inst.q, &inst.f, inst.rho, &inst.cost, &inst.space).unwrap();
        let tol = 1e-5 * (1.0 + inst.sup_norm);
        assert!(
            (dual - primal).abs() <= tol,
            "trial {trial}: dual {dual} vs primal {primal} (tol {tol})"
        );
    }
}

#[test]
fn dual_solver_matches_dense_lambda_scan() {
    // logistic loss on a labeled 1-D space, 5 atoms
    let space = SampleSpace::new(vec![(-1.0, 1.0)], vec![2], 21).unwrap();
    let cost = TransportCost::new(2.0, 2.0, 0.5, 1.0).unwrap();
    let fam = LossFamily::logistic(vec![(0.5, 1.5)], 3, &space).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let opts = InnerMaxOptions::new(1e-9, true);
    for theta in fam.theta_grid() {
        let atoms: Vec<SamplePoint<f64>> = (0..5)
            .map(|_| {
                SamplePoint::new(vec![rng.random_range(-1.0..1.0)], vec![rng.random_range(0..2)])
            })
            .collect();
        let q = EmpiricalDistribution::uniform(atoms).unwrap();
        let f = |p: &SamplePoint<f64>| fam.eval_unchecked(&theta, p);
        let rho = 0.1;
        let solved = solve_dual(&q, f, rho, &cost, &space, 1e-9, &opts)
            .unwrap()
            .value;
        // stage 1: 4096 log-spaced nodes on [1e-4, 1e4] plus lambda = 0
        let mut scan = dual_objective(0.0, &q, f, rho, &cost, &space, &opts).unwrap();
        let mut best_lambda = 0.0;
        for k in 0..4096 {
            let t = k as f64 / 4095.0;
            let lambda = 1e-4f64 * (1e8f64).powf(t);
            let v = dual_objective(lambda, &q, f, rho, &cost, &space, &opts).unwrap();
            if v < scan {
                scan = v;
                best_lambda = lambda;
            }
        }
        // stage 2: linear zoom around the coarse argmin so the oracle's own
        // resolution error drops below the comparison tolerance
        if best_lambda > 0.0 {
            let lo = best_lambda * 0.99;
            let hi = best_lambda * 1.01;
            for k in 0..4096 {
                let lambda = lo + (hi - lo) * k as f64 / 4095.0;
                let v = dual_objective(lambda, &q, f, rho, &cost, &space, &opts).unwrap();
                scan = scan.min(v);
            }
        }
        assert!(
            (solved - scan).abs() <= 1e-6 * (1.0 + scan.abs()),
            "solver {solved} vs dense scan {scan}"
        );
    }
}

#[test]
fn robust_risk_is_monotone_in_rho() {
    let space = SampleSpace::new(vec![(0.0, 1.0)], vec![], 21).unwrap();
    let cost = sq_cost();
    let opts = InnerMaxOptions::new(1e-9, false);
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..50 {
        let slope = rng.random_range(-1.0..1.0);
        let curve = rng.random_range(-1.0..1.0);
        let f = move |p: &SamplePoint<f64>| {
            let x = p.continuous[0];
            slope * x + curve * x * x
        };
        let q = EmpiricalDistribution::uniform(vec![
            SamplePoint::scalar(rng.random::<f64>()),
            SamplePoint::scalar(rng.random::<f64>()),
        ])
        .unwrap();
        let r1 = rng.random_range(0.0..0.5);
        let r2 = r1 + rng.random_range(0.01..0.5);
        let v1 = robust_risk(&q, f, r1, &cost, &space, 1e-9, &opts).unwrap();
        let v2 = robust_risk(&q, f, r2, &cost, &space, 1e-9, &opts).unwrap();
        assert!(v1 <= v2 + 1e-8, "not monotone: R({r1}) = {v1} > R({r2}) = {v2}");
        assert!(v1 >= q.mean(f) - 1e-9, "robust risk below the plain mean");
    }
}

#[test]
fn robust_risk_is_concave_in_rho() {
    let space = SampleSpace::new(vec![(0.0, 1.0)], vec![], 21).unwrap();
    let cost = sq_cost();
    let opts = InnerMaxOptions::new(1e-9, false);
    let q = EmpiricalDistribution::uniform(vec![
        SamplePoint::scalar(0.1),
        SamplePoint::scalar(0.4),
        SamplePoint::scalar(0.6),
    ])
    .unwrap();
    let f = |p: &SamplePoint<f64>| p.continuous[0] * p.continuous[0];
    let risk_at =
        |rho: f64| robust_risk(&q, f, rho, &cost, &space, 1e-10, &opts).unwrap();
    for k in 0..8 {
        let r1 = 0.02 + 0.05 * k as f64;
        let r3 = r1 + 0.1;
        let r2 = 0.5 * (r1 + r3);
        let (v1, v2, v3) = (risk_at(r1), risk_at(r2), risk_at(r3));
        assert!(
            v2 >= 0.5 * (v1 + v3) - 1e-6,
            "concavity violated at rho = {r2}: {v2} < {}",
            0.5 * (v1 + v3)
        );
    }
}

#[test]
fn dual_minimizer_is_nonincreasing_in_rho() {
    let space = SampleSpace::new(vec![(0.0, 1.0)], vec![], 41).unwrap();
    let cost = sq_cost();
    let opts = InnerMaxOptions::new(1e-9, true);
    let q = EmpiricalDistribution::dirac(SamplePoint::scalar(0.0));
    let f = |p: &SamplePoint<f64>| p.continuous[0];
    let mut prev = f64::INFINITY;
    for rho in [0.01, 0.04, 0.09, 0.16, 0.25, 0.49, 0.81] {
        let res = solve_dual(&q, f, rho, &cost, &space, 1e-8, &opts).unwrap();
        assert!(
            res.lambda_star <= prev + 1e-3,
            "lambda* increased at rho {rho}: {} > {prev}",
            res.lambda_star
        );
        prev = res.lambda_star;
    }
}

#[test]
fn degeneracy_sets_in_above_the_critical_radius() {
    let space = SampleSpace::new(vec![(0.0, 1.0)], vec![], 41).unwrap();
    let cost = sq_cost();
    let fam = FnFamily::single(|p: &SamplePoint<f64>| p.continuous[0], true);
    let p_ref = EmpiricalDistribution::uniform(vec![
        SamplePoint::scalar(0.0),
        SamplePoint::scalar(0.25),
        SamplePoint::scalar(0.5),
    ])
    .unwrap();
    let rc = critical_radius(&fam, &p_ref, &cost, &space, 1e-9).unwrap();
    assert!(rc > 0.0);
    let report = degeneracy_check(&fam, &p_ref, rc * 1.0001, &cost, &space, 1e-6).unwrap();
    assert!(report.degenerate, "gap = {}", report.min_gap);
}

#[test]
fn worst_case_matches_primal_oracle_on_three_atoms() {
    let space = SampleSpace::new(vec![(0.0, 1.0)], vec![], 5).unwrap();
    let cost = sq_cost();
    let nodes = space.grid();
    let q = EmpiricalDistribution::new(
        vec![nodes[0].clone(), nodes[1].clone(), nodes[2].clone()],
        vec![0.5, 0.3, 0.2],
    )
    .unwrap();
    let f = |p: &SamplePoint<f64>| p.continuous[0];
    let rho = 0.3;
    let opts = InnerMaxOptions::new(1e-9, false);
    let wc = worst_case_distribution(&q, f, rho, &cost, &space, 1e-9, &opts).unwrap();
    assert!(wc.transport_cost_used <= rho + 1e-9);
    let value: f64 = wc
        .atoms
        .iter()
        .zip(wc.weights.iter())
        .map(|(a, &w)| w * f(a))
        .sum();
    let oracle = primal_oracle(&q, f, rho, &cost, &space).unwrap();
    assert!(
        (value - oracle).abs() < 1e-4,
        "worst-case value {value} vs oracle {oracle}"
    );
    let total: f64 = wc.weights.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_symmetry_and_identity(
        x1 in -1.0..1.0f64, x2 in -1.0..1.0f64,
        y1 in -1.0..1.0f64, y2 in -1.0..1.0f64,
        q in 1.0..3.0f64,
    ) {
        let cost = TransportCost::new(2.0, q, 0.3, 1.0).unwrap();
        let a = SamplePoint::continuous(vec![x1, y1]);
        let b = SamplePoint::continuous(vec![x2, y2]);
        let ab = cost_eval(&cost, &a, &b).unwrap();
        let ba = cost_eval(&cost, &b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(cost_eval(&cost, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn grid_refinement_keeps_coarse_nodes(res in 2usize..12, lo in -2.0..0.0f64, width in 0.1..3.0f64) {
        let coarse = SampleSpace::new(vec![(lo, lo + width)], vec![], res).unwrap();
        let fine = coarse.with_resolution(2 * res - 1).unwrap();
        let fine_nodes: Vec<f64> = fine.grid().iter().map(|p| p.continuous[0]).collect();
        for node in coarse.grid() {
            prop_assert!(fine_nodes.iter().any(|&v| (v - node.continuous[0]).abs() < 1e-12));
        }
    }
}

#[test]
fn excess_bound_holds_on_random_logistic_instances() {
    // 50 random logistic instances with a pure power cost; with a_n = 0 and
    // the sample's own mean on the right-hand side the inequality is the
    // deterministic Wasserstein-Lipschitz bound
    let space = SampleSpace::new(vec![(-1.0, 1.0)], vec![1], 21).unwrap();
    let cost = TransportCost::new(2.0, 2.0, 0.0, 1.0).unwrap();
    let opts = InnerMaxOptions::new(1e-9, true);
    let mut rng = StdRng::seed_from_u64(515);
    for _ in 0..50 {
        let theta = rng.random_range(0.3..2.0);
        let fam = LossFamily::logistic(vec![(theta, theta)], 1, &space).unwrap();
        let constants = wdrocert_core::losses::family_constants(&fam, &cost).unwrap();
        let t = vec![theta];
        let f = |p: &SamplePoint<f64>| fam.eval_unchecked(&t, p);
        let atoms: Vec<SamplePoint<f64>> = (0..rng.random_range(2..6usize))
            .map(|_| SamplePoint::new(vec![rng.random_range(-1.0..1.0)], vec![0]))
            .collect();
        let q = EmpiricalDistribution::uniform(atoms).unwrap();
        let rho = rng.random_range(0.01..0.8);
        let report = wdrocert_core::risk::excess_gap_check(
            &q,
            f,
            rho,
            0.0,
            constants.lip_xi,
            2.0,
            q.mean(f),
            &cost,
            &space,
            1e-8,
            &opts,
        )
        .unwrap();
        assert!(report.holds, "violated: lhs {} rhs {}", report.lhs, report.rhs);
    }
}

#[test]
fn uniform_gap_scales_with_sqrt_n() {
    use wdrocert_core::experiments::{measure_uniform_gap, GapConfig, GroundTruth, GroundTruthKind};
    let space = SampleSpace::new(vec![(0.0, 1.0)], vec![], 21).unwrap();
    let cost = sq_cost();
    let fam = FnFamily::single(|p: &SamplePoint<f64>| p.continuous[0], false);
    let gt = GroundTruth::new(GroundTruthKind::UniformBox, &space).unwrap();
    let q95 = |n: usize| -> f64 {
        let cfg = GapConfig {
            family: &fam,
            space: &space,
            cost: &cost,
            ground_truth: &gt,
            lambda_low: 0.5,
            mu_points: 12,
            n,
            trials: 120,
            master_seed: 616,
            tie_tol: 1e-9,
        };
        let report = measure_uniform_gap(&cfg).unwrap();
        let mut scaled: Vec<f64> = report.per_trial.iter().map(|t| t.gap_sqrt_n).collect();
        scaled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let certified_alpha = 292.0;
        let within = report
            .per_trial
            .iter()
            .filter(|t| t.gap <= certified_alpha / (n as f64).sqrt())
            .count();
        // the certified constant is extremely slack; every trial sits under it
        assert_eq!(within, report.per_trial.len());
        scaled[(0.95 * scaled.len() as f64) as usize]
    };
    let g100 = q95(100);
    let g400 = q95(400);
    let ratio = g100 / g400;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "gap sqrt(n) quantiles differ too much: {g100} vs {g400}"
    );
}

#[test]
fn excess_zero_violations_with_certified_alpha_logistic() {
    use wdrocert_core::certificates::generalization_constants;
    use wdrocert_core::experiments::{run_excess, ExcessConfig, GapSource, GroundTruth, GroundTruthKind};
    use wdrocert_core::losses::family_constants;

    let space = SampleSpace::new(vec![(-1.0, 1.0)], vec![1], 21).unwrap();
    let cost = TransportCost::new(2.0, 2.0, 0.0, 1.0).unwrap();
    let fam = LossFamily::logistic(vec![(0.8, 1.4)], 3, &space).unwrap();
    let constants = family_constants(&fam, &cost).unwrap();
    let gt = GroundTruth::new(GroundTruthKind::UniformBox, &space).unwrap();
    let p_ref = gt.reference_distribution().unwrap();
    let view = fam.grid_family();
    let lambda_low = lambda_low_numeric(&view, &p_ref, &cost, &space, 1e-9).unwrap();
    let (alpha, _) =
        generalization_constants(lambda_low, constants.sup_norm, constants.dudley, 0.05).unwrap();
    let cfg = ExcessConfig {
        family: &view,
        space: &space,
        cost: &cost,
        ground_truth: &gt,
        rho: 0.05,
        n: 30,
        trials: 200,
        master_seed: 717,
        lip: constants.lip_xi,
        power_p: 2.0,
        gap_source: GapSource::Certified { alpha },
        solver_tol: 1e-7,
        tie_tol: 1e-9,
    };
    let report = run_excess(&cfg).unwrap();
    assert_eq!(report.violations, 0);
}

#[test]
fn reg_coverage_is_monotone_in_rho_with_paired_seeds() {
    use wdrocert_core::experiments::{run_coverage_reg, GroundTruth, GroundTruthKind, RegCoverageConfig};
    use wdrocert_core::reg::{kernel_moments, KernelKind, ReferenceKernel, RegParams};

    let space = SampleSpace::new(vec![(0.0, 1.0)], vec![], 11).unwrap();
    let cost = sq_cost();
    let fam = FnFamily::single(|p: &SamplePoint<f64>| p.continuous[0], false);
    let gt = GroundTruth::new(GroundTruthKind::UniformBox, &space).unwrap();
    let kernel = ReferenceKernel::new(KernelKind::TruncatedGaussian { sigma: 0.15 }, 11).unwrap();
    let m = kernel_moments(&kernel, &cost, &space).unwrap();
    let mut prev = -1.0;
    for step in 0..4 {
        let rho = m.m_c * (1.2 + 0.8 * step as f64);
        let cfg = RegCoverageConfig {
            family: &fam,
            space: &space,
            cost: &cost,
            ground_truth: &gt,
            kernel: &kernel,
            reg: RegParams::entropic(0.05).unwrap(),
            sup_norm: 1.0,
            n: 25,
            rho,
            trials: 24,
            master_seed: 818,
            solver_tol: 1e-7,
        };
        let report = run_coverage_reg(&cfg).unwrap();
        assert!(
            report.coverage >= prev,
            "regularized coverage dropped at rho {rho}"
        );
        prev = report.coverage;
    }
}

#[test]
fn certificate_bundles_assemble_with_provenance() {
    use wdrocert_core::certificates::{build_certificate, build_reg_certificate};
    use wdrocert_core::losses::family_constants;
    use wdrocert_core::reg::{KernelKind, ReferenceKernel, RegParams};

    let space = SampleSpace::new(vec![(-1.0, 1.0)], vec![1], 21).unwrap();
    let cost = TransportCost::new(2.0, 2.0, 1.0, 1.0).unwrap();
    let fam = LossFamily::logistic(vec![(0.8, 1.4)], 2, &space).unwrap();
    let constants = family_constants(&fam, &cost).unwrap();
    let grid = space.grid();
    let p_ref = EmpiricalDistribution::uniform(grid).unwrap();
    let bundle =
        build_certificate(&fam, &constants, &p_ref, &cost, &space, 0.05, &[100, 400], None)
            .unwrap();
    assert!(bundle.rho_crit > 0.0);
    assert!(bundle.lambda_low > 0.0);
    assert!(bundle.lambda_low_certified, "probe grid check failed");
    assert!(bundle.n_min > 0.0);
    assert_eq!(bundle.rho_admissible_lower.len(), 2);
    let (n0, lo0): (u64, f64) = bundle.rho_admissible_lower[0];
    assert_eq!(n0, 100);
    assert!((lo0 - bundle.alpha / 10.0).abs() < 1e-12);

    let kernel = ReferenceKernel::new(KernelKind::TruncatedGaussian { sigma: 0.3 }, 21).unwrap();
    let reg = RegParams::entropic(0.1).unwrap();
    let reg_bundle = build_reg_certificate(
        &fam, &constants, &p_ref, &kernel, &cost, &space, &reg, 1.5, 0.05,
    )
    .unwrap();
    assert!(reg_bundle.m_c > 0.0 && reg_bundle.m_2c > 0.0);
    assert!(reg_bundle.lambda_up > 0.0);
    assert_eq!(
        reg_bundle.vacuous,
        reg_bundle.rho_crit_reg <= 4.0 * reg_bundle.m_c
    );
    if reg_bundle.vacuous {
        assert!(reg_bundle.n_min_reg.is_none());
    } else {
        assert!(reg_bundle.n_min_reg.unwrap() > 0.0);
    }
}
