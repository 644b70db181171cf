//! Subcommand implementations. Every command reads the shared experiment
//! config, writes its outputs under the output directory, and prints a
//! short summary (suppressed by `--quiet`).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use wdrocert_core::certificates::{
    build_certificate, build_reg_certificate, critical_radius, degeneracy_check,
    lambda_low_numeric, rho_max_curve,
};
use wdrocert_core::dual::InnerMaxOptions;
use wdrocert_core::experiments::{
    measure_uniform_gap, run_coverage, run_coverage_reg, run_excess, sweep_radius_scaling,
    CoverageConfig, ExcessConfig, GapConfig, GapSource, RegCoverageConfig, SweepConfig,
};
use wdrocert_core::reg::robust_risk_reg;
use wdrocert_core::risk::{solve_dual, train_robust, EmpiricalDistribution};
use wdrocert_core::space::SamplePoint;

use crate::config::Experiment;
use crate::output::{f17, opt_f17, theta_col, write_csv, write_json, Summary};

fn ensure_out_dir(exp: &Experiment, out_override: Option<&Path>) -> Result<PathBuf> {
    let dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| exp.config.output_dir.clone());
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output dir {}", dir.display()))?;
    Ok(dir)
}

fn ground_truth(exp: &Experiment) -> Result<&wdrocert_core::GroundTruth64> {
    exp.ground_truth
        .as_ref()
        .ok_or_else(|| anyhow!("this subcommand needs a `ground_truth` block in the config"))
}

fn kernel_and_reg(
    exp: &Experiment,
) -> Result<(
    &wdrocert_core::ReferenceKernel64,
    wdrocert_core::RegParams64,
)> {
    match (&exp.kernel, &exp.reg) {
        (Some(k), Some(r)) => Ok((k, *r)),
        _ => bail!("this subcommand needs both `kernel` and `reg` blocks in the config"),
    }
}

/// `risk`: robust risk over the θ-grid for each configured radius, around
/// an empirical sample of `n_list[0]` points drawn from the ground truth
/// with the master seed.
pub fn cmd_risk(exp: &Experiment, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = ensure_out_dir(exp, out)?;
    let mut summary = Summary::new(quiet);
    let rhos = exp.config.rhos()?;
    let gt = ground_truth(exp)?;
    let sample = gt.sample(
        exp.config.n_list.first().copied().unwrap_or(100),
        &wdrocert_core::experiments::TrialSeed::new(exp.config.master_seed, 0),
    )?;
    let opts = InnerMaxOptions::new(exp.tie_tol(), exp.family.refine_inner());

    let mut rows = Vec::new();
    for &rho in &rhos {
        for theta in exp.family.theta_grid() {
            let f = |p: &SamplePoint<f64>| exp.family.eval_unchecked(&theta, p);
            let (value, lambda_star, evaluations) = if rho == 0.0 {
                (sample.mean(f), 0.0, 0usize)
            } else {
                let res = solve_dual(
                    &sample,
                    f,
                    rho,
                    &exp.cost,
                    &exp.space,
                    exp.config.solver_tol,
                    &opts,
                )?;
                (res.value, res.lambda_star, res.evaluations)
            };
            rows.push(format!(
                "{},{},{},{},{evaluations}",
                theta_col(&theta),
                f17(rho),
                f17(value),
                f17(lambda_star)
            ));
        }
        let (theta_star, best) = train_robust(
            &sample,
            &exp.family,
            rho,
            &exp.cost,
            &exp.space,
            exp.config.solver_tol,
        )?;
        summary.note(format!(
            "rho = {rho}: robust-optimal theta = [{}] with value {best}",
            theta_col(&theta_star)
        ));
    }
    let path = dir.join("risk.csv");
    write_csv(&path, "theta,rho,value,lambda_star,evaluations", &rows)?;
    summary.wrote(path);
    summary.finish();
    Ok(())
}

/// `reg-risk`: regularized robust risk over the θ-grid.
pub fn cmd_reg_risk(exp: &Experiment, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = ensure_out_dir(exp, out)?;
    let mut summary = Summary::new(quiet);
    let (kernel, reg) = kernel_and_reg(exp)?;
    let rhos = exp.config.rhos()?;
    let gt = ground_truth(exp)?;
    let sample = gt.sample(
        exp.config.n_list.first().copied().unwrap_or(100),
        &wdrocert_core::experiments::TrialSeed::new(exp.config.master_seed, 0),
    )?;

    let mut rows = Vec::new();
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    for &rho in &rhos {
        for theta in exp.family.theta_grid() {
            let res = robust_risk_reg(
                &sample,
                |p: &SamplePoint<f64>| exp.family.eval_unchecked(&theta, p),
                rho,
                kernel,
                &exp.cost,
                &exp.space,
                &reg,
                exp.constants.sup_norm,
                exp.config.solver_tol,
            )?;
            if best.as_ref().map(|(_, _, v)| res.value < *v).unwrap_or(true) {
                best = Some((theta.clone(), rho, res.value));
            }
            rows.push(format!(
                "{},{},{},{},{}",
                theta_col(&theta),
                f17(rho),
                f17(res.value),
                f17(res.lambda_star),
                res.evaluations
            ));
        }
    }
    if let Some((theta, rho, value)) = best {
        summary.note(format!(
            "best regularized value {value} at theta = [{}], rho = {rho}",
            theta_col(&theta)
        ));
    }
    let path = dir.join("regrisk.csv");
    write_csv(&path, "theta,rho,value,lambda_star,evaluations", &rows)?;
    summary.wrote(path);
    summary.finish();
    Ok(())
}

/// `certify`: certificate bundle JSON plus the ρ_max curve CSV.
pub fn cmd_certify(exp: &Experiment, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = ensure_out_dir(exp, out)?;
    let mut summary = Summary::new(quiet);
    let gt = ground_truth(exp)?;
    let p_ref = gt.reference_distribution()?;
    let n_list: Vec<u64> = exp.config.n_list.iter().map(|&n| n as u64).collect();

    let bundle = build_certificate(
        &exp.family,
        &exp.constants,
        &p_ref,
        &exp.cost,
        &exp.space,
        exp.config.delta,
        &n_list,
        exp.config.tie_tol,
    )?;
    summary.note(format!(
        "rho_crit = {}, lambda_low = {}, alpha = {}, beta = {}, n_min = {}",
        bundle.rho_crit, bundle.lambda_low, bundle.alpha, bundle.beta, bundle.n_min
    ));

    let lambda_grid = match &exp.config.lambda_grid {
        Some(grid) => grid.clone(),
        None => default_lambda_grid(bundle.lambda_low),
    };
    let view = exp.family.grid_family();
    let curve = rho_max_curve(
        &view,
        &p_ref,
        &exp.cost,
        &exp.space,
        &lambda_grid,
        bundle.tie_tol,
    )?;
    let rows: Vec<String> = curve
        .iter()
        .map(|&(l, v)| format!("{},{}", f17(l), f17(v)))
        .collect();
    let curve_path = dir.join("rhomax.csv");
    write_csv(&curve_path, "lambda,rho_max", &rows)?;

    let cert_path = dir.join("certificate.json");
    write_json(&cert_path, &bundle)?;
    summary.wrote(cert_path);
    summary.wrote(curve_path);

    if let (Some(kernel), Some(reg)) = (&exp.kernel, &exp.reg) {
        let rho = *exp.config.rhos()?.first().expect("nonempty rhos");
        let reg_bundle = build_reg_certificate(
            &exp.family,
            &exp.constants,
            &p_ref,
            kernel,
            &exp.cost,
            &exp.space,
            reg,
            rho,
            exp.config.delta,
        )?;
        summary.note(format!(
            "regularized: rho_crit = {}, m_c = {}, lambda_low = {}, vacuous = {}",
            reg_bundle.rho_crit_reg, reg_bundle.m_c, reg_bundle.lambda_low_reg, reg_bundle.vacuous
        ));
        let reg_path = dir.join("reg_certificate.json");
        write_json(&reg_path, &reg_bundle)?;
        summary.wrote(reg_path);
    }
    summary.finish();
    Ok(())
}

fn default_lambda_grid(lambda_low: f64) -> Vec<f64> {
    let mut grid = vec![0.0];
    let lo = lambda_low / 8.0;
    let hi = 16.0 * lambda_low;
    let points = 24usize;
    for k in 0..points {
        let t = k as f64 / (points - 1) as f64;
        grid.push(lo * (hi / lo).powf(t));
    }
    grid
}

/// `coverage`: exact-bound coverage per `(n, ρ)`.
pub fn cmd_coverage(exp: &Experiment, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = ensure_out_dir(exp, out)?;
    let mut summary = Summary::new(quiet);
    let gt = ground_truth(exp)?;
    let rhos = exp.config.rhos()?;
    let view = exp.family.grid_family();

    // degeneracy context per the critical-radius estimate around P
    let p_ref = gt.reference_distribution()?;
    let rho_crit_est = critical_radius(&view, &p_ref, &exp.cost, &exp.space, exp.tie_tol())?;

    let mut coverage_rows = Vec::new();
    let mut trial_rows = Vec::new();
    for &n in &exp.config.n_list {
        for &rho in &rhos {
            let cfg = CoverageConfig {
                family: &view,
                space: &exp.space,
                cost: &exp.cost,
                ground_truth: gt,
                n,
                rho,
                trials: exp.config.trials,
                master_seed: exp.config.master_seed,
                solver_tol: exp.config.solver_tol,
                tie_tol: exp.tie_tol(),
            };
            let report = run_coverage(&cfg)?;
            coverage_rows.push(format!(
                "{n},{},{},{}",
                f17(rho),
                report.trials,
                f17(report.coverage)
            ));
            for rec in &report.per_trial {
                trial_rows.push(format!(
                    "{n},{},{},{},{},{}",
                    f17(rho),
                    rec.trial_index,
                    rec.seed,
                    theta_col(&rec.worst_theta),
                    f17(rec.min_slack)
                ));
            }
            let mut line = format!(
                "n = {n}, rho = {rho}: coverage {} over {} trials ({} aborted)",
                report.coverage, report.trials, report.aborted
            );
            if rho >= rho_crit_est {
                line.push_str(&format!(
                    " [degenerate regime: rho >= estimated critical radius {rho_crit_est}]"
                ));
            }
            summary.note(line);
        }
    }
    let coverage_path = dir.join("coverage.csv");
    write_csv(&coverage_path, "n,rho,trials,coverage", &coverage_rows)?;
    let trials_path = dir.join("trials.csv");
    write_csv(
        &trials_path,
        "n,rho,trial_index,seed,worst_theta,min_slack",
        &trial_rows,
    )?;
    summary.wrote(coverage_path);
    summary.wrote(trials_path);

    if let (Some(kernel), Some(reg)) = (&exp.kernel, &exp.reg) {
        let mut reg_rows = Vec::new();
        for &n in &exp.config.n_list {
            for &rho in &rhos {
                let cfg = RegCoverageConfig {
                    family: &view,
                    space: &exp.space,
                    cost: &exp.cost,
                    ground_truth: gt,
                    kernel,
                    reg: *reg,
                    sup_norm: exp.constants.sup_norm,
                    n,
                    rho,
                    trials: exp.config.trials,
                    master_seed: exp.config.master_seed,
                    solver_tol: exp.config.solver_tol,
                };
                let report = run_coverage_reg(&cfg)?;
                reg_rows.push(format!(
                    "{n},{},{},{}",
                    f17(rho),
                    report.trials,
                    f17(report.coverage)
                ));
                summary.note(format!(
                    "regularized: n = {n}, rho = {rho}: coverage {}",
                    report.coverage
                ));
            }
        }
        let path = dir.join("coverage_reg.csv");
        write_csv(&path, "n,rho,trials,coverage", &reg_rows)?;
        summary.wrote(path);
    }
    summary.finish();
    Ok(())
}

/// `sweep`: minimal radius reaching the target coverage per n.
pub fn cmd_sweep(exp: &Experiment, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = ensure_out_dir(exp, out)?;
    let mut summary = Summary::new(quiet);
    let gt = ground_truth(exp)?;
    let view = exp.family.grid_family();
    let p_ref = gt.reference_distribution()?;
    let rho_cap = match exp.config.rho_cap {
        Some(cap) => cap,
        None => {
            // the critical radius estimate is always enough for full coverage
            2.0 * critical_radius(&view, &p_ref, &exp.cost, &exp.space, exp.tie_tol())?
        }
    };
    let cfg = SweepConfig {
        family: &view,
        space: &exp.space,
        cost: &exp.cost,
        ground_truth: gt,
        n_list: exp.config.n_list.clone(),
        target_coverage: exp.config.coverage_target,
        trials: exp.config.trials,
        rho_cap,
        bisect_iters: exp.config.sweep_bisect_iters,
        master_seed: exp.config.master_seed,
        solver_tol: exp.config.solver_tol,
        tie_tol: exp.tie_tol(),
    };
    let rows = sweep_radius_scaling(&cfg)?;
    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{}",
                r.n,
                opt_f17(r.rho_star),
                opt_f17(r.rho_star_sqrt_n)
            )
        })
        .collect();
    for r in &rows {
        match r.rho_star {
            Some(star) => summary.note(format!(
                "n = {}: rho* = {star} (rho* sqrt(n) = {})",
                r.n,
                r.rho_star_sqrt_n.unwrap_or(f64::NAN)
            )),
            None => summary.note(format!(
                "n = {}: target coverage unreachable below rho_cap = {rho_cap}",
                r.n
            )),
        }
    }
    let path = dir.join("sweep.csv");
    write_csv(&path, "n,rho_star,rho_star_sqrt_n", &csv_rows)?;
    summary.wrote(path);
    summary.finish();
    Ok(())
}

/// `gap`: empirical uniform gap per trial.
pub fn cmd_gap(exp: &Experiment, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = ensure_out_dir(exp, out)?;
    let mut summary = Summary::new(quiet);
    let gt = ground_truth(exp)?;
    let view = exp.family.grid_family();
    let lambda_low = match exp.config.lambda_low {
        Some(l) => l,
        None => {
            let p_ref = gt.reference_distribution()?;
            lambda_low_numeric(&view, &p_ref, &exp.cost, &exp.space, exp.tie_tol())?
        }
    };
    let mut rows = Vec::new();
    for &n in &exp.config.n_list {
        let cfg = GapConfig {
            family: &view,
            space: &exp.space,
            cost: &exp.cost,
            ground_truth: gt,
            lambda_low,
            mu_points: exp.config.mu_points,
            n,
            trials: exp.config.trials,
            master_seed: exp.config.master_seed,
            tie_tol: exp.tie_tol(),
        };
        let report = measure_uniform_gap(&cfg)?;
        let max_gap = report
            .per_trial
            .iter()
            .map(|t| t.gap)
            .fold(f64::NEG_INFINITY, f64::max);
        summary.note(format!(
            "n = {n}: max gap {max_gap} over {} trials (lambda_low = {lambda_low})",
            report.trials
        ));
        for t in &report.per_trial {
            rows.push(format!(
                "{n},{},{},{},{}",
                t.trial_index,
                t.seed,
                f17(t.gap),
                f17(t.gap_sqrt_n)
            ));
        }
    }
    let path = dir.join("gap.csv");
    write_csv(&path, "n,trial_index,seed,gap,gap_sqrt_n", &rows)?;
    summary.wrote(path);
    summary.finish();
    Ok(())
}

/// `excess`: excess-risk audit rows per trial and member.
pub fn cmd_excess(exp: &Experiment, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = ensure_out_dir(exp, out)?;
    let mut summary = Summary::new(quiet);
    let gt = ground_truth(exp)?;
    let view = exp.family.grid_family();
    let rhos = exp.config.rhos()?;
    let lip = exp.config.lip.unwrap_or(exp.constants.lip_xi);
    let alpha = match exp.config.excess_alpha {
        Some(a) => a,
        None => {
            let p_ref = gt.reference_distribution()?;
            let lambda_low =
                lambda_low_numeric(&view, &p_ref, &exp.cost, &exp.space, exp.tie_tol())?;
            wdrocert_core::certificates::generalization_constants(
                lambda_low,
                exp.constants.sup_norm,
                exp.constants.dudley,
                exp.config.delta,
            )?
            .0
        }
    };

    let mut rows = Vec::new();
    let mut total_violations = 0usize;
    for &n in &exp.config.n_list {
        for &rho in &rhos {
            let cfg = ExcessConfig {
                family: &view,
                space: &exp.space,
                cost: &exp.cost,
                ground_truth: gt,
                rho,
                n,
                trials: exp.config.trials,
                master_seed: exp.config.master_seed,
                lip,
                power_p: exp.cost.power_q,
                gap_source: GapSource::Certified { alpha },
                solver_tol: exp.config.solver_tol,
                tie_tol: exp.tie_tol(),
            };
            let report = run_excess(&cfg)?;
            total_violations += report.violations;
            for r in &report.rows {
                rows.push(format!(
                    "{n},{},{},{},{},{},{},{}",
                    f17(rho),
                    r.trial_index,
                    theta_col(&r.theta),
                    f17(r.lhs),
                    f17(r.rhs),
                    f17(r.slack),
                    r.violated
                ));
            }
        }
    }
    summary.note(format!(
        "excess bound with alpha = {alpha}, lip = {lip}: {total_violations} violations"
    ));
    let path = dir.join("excess.csv");
    write_csv(
        &path,
        "n,rho,trial_index,theta,lhs,rhs,slack,violated",
        &rows,
    )?;
    summary.wrote(path);
    summary.finish();
    Ok(())
}

/// `degeneracy`: minimal worst-case gap per radius.
pub fn cmd_degeneracy(exp: &Experiment, out: Option<&Path>, quiet: bool) -> Result<()> {
    let dir = ensure_out_dir(exp, out)?;
    let mut summary = Summary::new(quiet);
    let gt = ground_truth(exp)?;
    let p_ref: EmpiricalDistribution<f64> = gt.reference_distribution()?;
    let view = exp.family.grid_family();
    let rhos = exp.config.rhos()?;
    let tol = exp
        .config
        .degeneracy_tol
        .unwrap_or(1e-6 * (1.0 + exp.constants.sup_norm));

    let rho_crit_est = critical_radius(&view, &p_ref, &exp.cost, &exp.space, exp.tie_tol())?;
    summary.note(format!("estimated critical radius: {rho_crit_est}"));

    let mut rows = Vec::new();
    for &rho in &rhos {
        let report = degeneracy_check(&view, &p_ref, rho, &exp.cost, &exp.space, tol)?;
        summary.note(format!(
            "rho = {rho}: min gap {} -> {}",
            report.min_gap,
            if report.degenerate {
                "degenerate"
            } else {
                "not degenerate"
            }
        ));
        rows.push(format!(
            "{},{},{},{}",
            f17(rho),
            f17(report.min_gap),
            report.degenerate,
            theta_col(&report.worst_theta)
        ));
    }
    let path = dir.join("degeneracy.csv");
    write_csv(&path, "rho,min_gap,degenerate,worst_theta", &rows)?;
    summary.wrote(path);
    summary.finish();
    Ok(())
}
