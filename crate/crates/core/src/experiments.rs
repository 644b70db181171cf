//! Seeded Monte Carlo harness for the statistical claims: exact-bound
//! coverage (standard and regularized), the 1/√n radius scaling sweep, the
//! uniform gap, and the excess-risk audit.
//!
//! Determinism contract: every trial's random stream is a pure function of
//! `(master_seed, trial_index)` through a splitmix64 derivation, trials are
//! independent work items executed on a rayon pool, and all aggregation is
//! keyed by trial index, so identical configurations produce identical
//! results at any worker count.
//!
//! "True" expectations `E_P[f]` are density-table quadratures on the space
//! grid (the dataset kind uses the full dataset as P), so coverage
//! decisions compare a solver output against a noise-free reference.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dual::{inner_max_on, InnerMaxOptions};
use crate::error::{Error, Result};
use crate::losses::Family;
use crate::reg::robust_risk_reg_with;
use crate::reg::{ReferenceKernel, RegContext, RegParams};
use crate::risk::{robust_risk, EmpiricalDistribution};
use crate::scalar::Real;
use crate::space::{SamplePoint, SampleSpace, TransportCost};

/// Per-trial deterministic seed derivation (splitmix64-style).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialSeed {
    pub master_seed: u64,
    pub trial_index: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl TrialSeed {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }

    /// 64-bit stream seed; recorded per trial so any trial can be re-run alone.
    pub fn stream_seed(&self) -> u64 {
        splitmix64(
            self.master_seed
                .wrapping_add(self.trial_index.wrapping_add(1).wrapping_mul(GOLDEN)),
        )
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.stream_seed())
    }
}

/// Ground-truth distribution P with a grid density table for exact
/// expectations (the dataset kind uses its rows as P directly).
#[derive(Debug, Clone)]
pub enum GroundTruthKind<R> {
    UniformBox,
    TruncatedGaussian {
        mean: Vec<R>,
        sigma: R,
    },
    LabelMixture {
        class_means: Vec<Vec<R>>,
        sigma: R,
        class_probs: Vec<R>,
    },
    Dataset {
        points: Vec<SamplePoint<R>>,
        with_replacement: bool,
    },
}

#[derive(Debug, Clone)]
pub struct GroundTruth<R> {
    kind: GroundTruthKind<R>,
    space: SampleSpace<R>,
    table: Option<(Vec<SamplePoint<R>>, Vec<R>)>,
}

impl<R: Real> GroundTruth<R> {
    pub fn new(kind: GroundTruthKind<R>, space: &SampleSpace<R>) -> Result<Self> {
        match &kind {
            GroundTruthKind::UniformBox => {}
            GroundTruthKind::TruncatedGaussian { mean, sigma } => {
                if mean.len() != space.continuous_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "ground truth mean",
                        what: "continuous",
                        expected: space.continuous_dim(),
                        got: mean.len(),
                    });
                }
                if !(*sigma >= R::zero()) {
                    return Err(Error::InvalidParameter(
                        "ground truth sigma must be nonnegative".into(),
                    ));
                }
            }
            GroundTruthKind::LabelMixture {
                class_means,
                sigma,
                class_probs,
            } => {
                if space.label_dim() != 1 {
                    return Err(Error::InvalidParameter(
                        "label_mixture needs exactly one label axis".into(),
                    ));
                }
                let classes = space.alphabets()[0];
                if class_means.len() != classes || class_probs.len() != classes {
                    return Err(Error::InvalidParameter(format!(
                        "label_mixture needs {classes} class means and probabilities"
                    )));
                }
                for m in class_means {
                    if m.len() != space.continuous_dim() {
                        return Err(Error::DimensionMismatch {
                            context: "class mean",
                            what: "continuous",
                            expected: space.continuous_dim(),
                            got: m.len(),
                        });
                    }
                }
                if class_probs.iter().any(|p| *p < R::zero()) {
                    return Err(Error::InvalidParameter(
                        "class probabilities must be nonnegative".into(),
                    ));
                }
                let total: R = class_probs.iter().copied().sum();
                if (total - R::one()).abs() > R::of(1e-12) {
                    return Err(Error::InvalidParameter(
                        "class probabilities must sum to 1".into(),
                    ));
                }
                if !(*sigma >= R::zero()) {
                    return Err(Error::InvalidParameter(
                        "label_mixture sigma must be nonnegative".into(),
                    ));
                }
            }
            GroundTruthKind::Dataset { points, .. } => {
                if points.is_empty() {
                    return Err(Error::Empty("dataset"));
                }
                for p in points {
                    space.contains(p)?;
                }
            }
        }

        let table = match &kind {
            GroundTruthKind::Dataset { .. } => None,
            _ => {
                let nodes = space.grid();
                let log_w: Vec<R> = nodes
                    .iter()
                    .map(|node| match &kind {
                        GroundTruthKind::UniformBox => R::zero(),
                        GroundTruthKind::TruncatedGaussian { mean, sigma } => {
                            gaussian_log_density(&node.continuous, mean, *sigma)
                        }
                        GroundTruthKind::LabelMixture {
                            class_means,
                            sigma,
                            class_probs,
                        } => {
                            let class = node.labels[0];
                            let p = class_probs[class];
                            if p == R::zero() {
                                R::neg_infinity()
                            } else {
                                p.ln()
                                    + gaussian_log_density(
                                        &node.continuous,
                                        &class_means[class],
                                        *sigma,
                                    )
                            }
                        }
                        GroundTruthKind::Dataset { .. } => unreachable!(),
                    })
                    .collect();
                let max = log_w.iter().fold(R::neg_infinity(), |m, &v| m.max(v));
                let mut w: Vec<R> = log_w
                    .iter()
                    .map(|&v| if v.is_finite() { (v - max).exp() } else { R::zero() })
                    .collect();
                let total: R = w.iter().copied().sum();
                for v in &mut w {
                    *v = *v / total;
                }
                Some((nodes, w))
            }
        };

        Ok(Self {
            kind,
            space: space.clone(),
            table,
        })
    }

    /// Loads a dataset ground truth from CSV (header row; one column per
    /// continuous axis followed by one per label axis; binary labels may be
    /// encoded as ±1).
    pub fn dataset_from_csv(
        path: &std::path::Path,
        space: &SampleSpace<R>,
        with_replacement: bool,
    ) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)?;
        let cont = space.continuous_dim();
        let labels = space.label_dim();
        let mut points = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != cont + labels {
                return Err(Error::InvalidParameter(format!(
                    "dataset row has {} columns, expected {}",
                    record.len(),
                    cont + labels
                )));
            }
            let continuous: Vec<R> = (0..cont)
                .map(|i| {
                    record[i].trim().parse::<f64>().map(R::of).map_err(|_| {
                        Error::InvalidParameter(format!(
                            "bad numeric value {:?} in dataset",
                            &record[i]
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let label_values: Vec<usize> = (cont..cont + labels)
                .map(|i| {
                    let raw: i64 = record[i].trim().parse().map_err(|_| {
                        Error::InvalidParameter(format!(
                            "bad label value {:?} in dataset",
                            &record[i]
                        ))
                    })?;
                    let alphabet = space.alphabets()[i - cont];
                    // allow the ±1 encoding for binary labels
                    let idx = if alphabet == 2 && raw == -1 {
                        0
                    } else if alphabet == 2 && raw == 1 {
                        1
                    } else {
                        raw as usize
                    };
                    Ok(idx)
                })
                .collect::<Result<_>>()?;
            points.push(SamplePoint::new(continuous, label_values));
        }
        Self::new(
            GroundTruthKind::Dataset {
                points,
                with_replacement,
            },
            space,
        )
    }

    pub fn space(&self) -> &SampleSpace<R> {
        &self.space
    }

    /// The density table (or dataset) as a weighted empirical distribution,
    /// usable as the reference P for certificates.
    pub fn reference_distribution(&self) -> Result<EmpiricalDistribution<R>> {
        match (&self.table, &self.kind) {
            (Some((nodes, weights)), _) => {
                let mut atoms = Vec::new();
                let mut w = Vec::new();
                for (node, &wk) in nodes.iter().zip(weights.iter()) {
                    if wk > R::zero() {
                        atoms.push(node.clone());
                        w.push(wk);
                    }
                }
                EmpiricalDistribution::new(atoms, w)
            }
            (None, GroundTruthKind::Dataset { points, .. }) => {
                EmpiricalDistribution::uniform(points.clone())
            }
            _ => unreachable!(),
        }
    }

    /// Exact `E_P[f]` by table quadrature (dataset: full-data mean).
    pub fn true_mean<F: Fn(&SamplePoint<R>) -> R>(&self, f: F) -> R {
        match (&self.table, &self.kind) {
            (Some((nodes, weights)), _) => nodes
                .iter()
                .zip(weights.iter())
                .map(|(n, &w)| w * f(n))
                .sum(),
            (None, GroundTruthKind::Dataset { points, .. }) => {
                let total: R = points.iter().map(&f).sum();
                total / R::from_usize(points.len()).unwrap()
            }
            _ => unreachable!(),
        }
    }

    /// Draws `n` equal-weight atoms; deterministic given the trial seed.
    pub fn sample(&self, n: usize, seed: &TrialSeed) -> Result<EmpiricalDistribution<R>> {
        if n == 0 {
            return Err(Error::Empty("sample"));
        }
        let mut rng = seed.rng();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let mut atoms = Vec::with_capacity(n);
        match &self.kind {
            GroundTruthKind::UniformBox => {
                for _ in 0..n {
                    let continuous = self
                        .space
                        .boxes()
                        .iter()
                        .map(|&(lo, hi)| lo + (hi - lo) * R::of(rng.random::<f64>()))
                        .collect();
                    let labels = self
                        .space
                        .alphabets()
                        .iter()
                        .map(|&a| draw_index(rng.random::<f64>(), a))
                        .collect();
                    atoms.push(SamplePoint::new(continuous, labels));
                }
            }
            GroundTruthKind::TruncatedGaussian { mean, sigma } => {
                for _ in 0..n {
                    let continuous = self
                        .space
                        .boxes()
                        .iter()
                        .zip(mean.iter())
                        .map(|(&(lo, hi), &m)| {
                            R::of(truncated_normal_inverse(
                                rng.random::<f64>(),
                                m.lossy(),
                                sigma.lossy(),
                                lo.lossy(),
                                hi.lossy(),
                                &normal,
                            ))
                        })
                        .collect();
                    let labels = self
                        .space
                        .alphabets()
                        .iter()
                        .map(|&a| draw_index(rng.random::<f64>(), a))
                        .collect();
                    atoms.push(SamplePoint::new(continuous, labels));
                }
            }
            GroundTruthKind::LabelMixture {
                class_means,
                sigma,
                class_probs,
            } => {
                for _ in 0..n {
                    let class = draw_categorical(rng.random::<f64>(), class_probs);
                    let continuous = self
                        .space
                        .boxes()
                        .iter()
                        .zip(class_means[class].iter())
                        .map(|(&(lo, hi), &m)| {
                            R::of(truncated_normal_inverse(
                                rng.random::<f64>(),
                                m.lossy(),
                                sigma.lossy(),
                                lo.lossy(),
                                hi.lossy(),
                                &normal,
                            ))
                        })
                        .collect();
                    atoms.push(SamplePoint::new(continuous, vec![class]));
                }
            }
            GroundTruthKind::Dataset {
                points,
                with_replacement,
            } => {
                if *with_replacement {
                    for _ in 0..n {
                        let idx = draw_index(rng.random::<f64>(), points.len());
                        atoms.push(points[idx].clone());
                    }
                } else {
                    if n > points.len() {
                        return Err(Error::InvalidParameter(format!(
                            "cannot draw {n} rows without replacement from a dataset of {}",
                            points.len()
                        )));
                    }
                    let mut indices: Vec<usize> = (0..points.len()).collect();
                    let (chosen, _) = indices.partial_shuffle(&mut rng, n);
                    for &idx in chosen.iter() {
                        atoms.push(points[idx].clone());
                    }
                }
            }
        }
        EmpiricalDistribution::uniform(atoms)
    }
}

fn gaussian_log_density<R: Real>(x: &[R], mean: &[R], sigma: R) -> R {
    let d2: R = x
        .iter()
        .zip(mean.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    if sigma == R::zero() {
        // degenerate: all table mass at the mean's node
        if d2 == R::zero() {
            R::zero()
        } else {
            R::neg_infinity()
        }
    } else {
        -d2 / (R::of(2.0) * sigma * sigma)
    }
}

fn draw_index(u: f64, size: usize) -> usize {
    ((u * size as f64).floor() as usize).min(size.saturating_sub(1))
}

fn draw_categorical<R: Real>(u: f64, probs: &[R]) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.lossy();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn truncated_normal_inverse(
    u: f64,
    mean: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    normal: &Normal,
) -> f64 {
    if sigma == 0.0 {
        return mean.clamp(lo, hi);
    }
    let a = (lo - mean) / sigma;
    let b = (hi - mean) / sigma;
    let fa = normal.cdf(a);
    let fb = normal.cdf(b);
    if fb - fa <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let p = (fa + u * (fb - fa)).clamp(1e-300, 1.0 - 1e-16);
    (mean + sigma * normal.inverse_cdf(p)).clamp(lo, hi)
}

// ---------------------------------------------------------------------------
// Coverage of the exact bound
// ---------------------------------------------------------------------------

/// One coverage experiment at a single `(n, ρ)`.
pub struct CoverageConfig<'a, R: Real> {
    pub family: &'a dyn Family<R>,
    pub space: &'a SampleSpace<R>,
    pub cost: &'a TransportCost<R>,
    pub ground_truth: &'a GroundTruth<R>,
    pub n: usize,
    pub rho: R,
    pub trials: usize,
    pub master_seed: u64,
    pub solver_tol: R,
    pub tie_tol: R,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord<R> {
    pub trial_index: u64,
    pub seed: u64,
    pub worst_theta: Vec<R>,
    pub min_slack: R,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport<R> {
    pub n: usize,
    pub rho: R,
    pub trials: usize,
    /// Fraction of trials with `min_θ (R̂_ρ(f_θ) − E_P[f_θ]) ≥ 0`.
    pub coverage: R,
    pub aborted: usize,
    pub per_trial: Vec<TrialRecord<R>>,
    pub wall_time_secs: f64,
}

/// Runs one trial of the standard coverage experiment.
pub fn run_coverage_trial<R: Real>(
    cfg: &CoverageConfig<'_, R>,
    true_means: &[R],
    trial_index: u64,
) -> Result<TrialRecord<R>> {
    let seed = TrialSeed::new(cfg.master_seed, trial_index);
    let sample = cfg.ground_truth.sample(cfg.n, &seed)?;
    let opts = InnerMaxOptions::new(cfg.tie_tol, cfg.family.refine_inner());
    let mut min_slack = R::infinity();
    let mut worst = Vec::new();
    for m in 0..cfg.family.member_count() {
        let value = robust_risk(
            &sample,
            |p: &SamplePoint<R>| cfg.family.eval_member(m, p),
            cfg.rho,
            cfg.cost,
            cfg.space,
            cfg.solver_tol,
            &opts,
        )?;
        let slack = value - true_means[m];
        if slack < min_slack {
            min_slack = slack;
            worst = cfg.family.theta(m);
        }
    }
    Ok(TrialRecord {
        trial_index,
        seed: seed.stream_seed(),
        worst_theta: worst,
        min_slack,
    })
}

/// Rounding guard for the covered/uncovered decision: slacks this close to
/// zero (relative to the reference scale) count as covered, so exact-equality
/// degeneracies such as constant losses are not misclassified by float sums.
fn coverage_guard<R: Real>(true_means: &[R]) -> R {
    let scale = true_means
        .iter()
        .fold(R::one(), |acc, &m| acc.max(m.abs()));
    R::of(1e-11) * scale
}

/// Per-trial coverage of `R̂_ρ(f) ≥ E_P[f]` over the whole family.
pub fn run_coverage<R: Real>(cfg: &CoverageConfig<'_, R>) -> Result<CoverageReport<R>> {
    let start = std::time::Instant::now();
    if cfg.family.member_count() == 0 {
        return Err(Error::Empty("family"));
    }
    if cfg.rho < R::zero() {
        return Err(Error::RadiusNegative {
            rho: cfg.rho.lossy(),
        });
    }
    let true_means: Vec<R> = (0..cfg.family.member_count())
        .map(|m| cfg.ground_truth.true_mean(|p| cfg.family.eval_member(m, p)))
        .collect();
    let guard = coverage_guard(&true_means);

    let outcomes: Vec<Result<TrialRecord<R>>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_coverage_trial(cfg, &true_means, t))
        .collect();

    let mut per_trial = Vec::with_capacity(cfg.trials);
    let mut covered = 0usize;
    let mut aborted = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(rec) => {
                if rec.min_slack >= -guard {
                    covered += 1;
                }
                per_trial.push(rec);
            }
            Err(_) => aborted += 1,
        }
    }
    let coverage = R::from_usize(covered).unwrap() / R::from_usize(cfg.trials).unwrap();
    Ok(CoverageReport {
        n: cfg.n,
        rho: cfg.rho,
        trials: cfg.trials,
        coverage,
        aborted,
        per_trial,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Radius scaling sweep
// ---------------------------------------------------------------------------

pub struct SweepConfig<'a, R: Real> {
    pub family: &'a dyn Family<R>,
    pub space: &'a SampleSpace<R>,
    pub cost: &'a TransportCost<R>,
    pub ground_truth: &'a GroundTruth<R>,
    pub n_list: Vec<usize>,
    pub target_coverage: R,
    pub trials: usize,
    pub rho_cap: R,
    pub bisect_iters: usize,
    pub master_seed: u64,
    pub solver_tol: R,
    pub tie_tol: R,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow<R> {
    pub n: usize,
    /// Minimal ρ reaching the target coverage; `None` when unreachable
    /// within the cap.
    pub rho_star: Option<R>,
    pub rho_star_sqrt_n: Option<R>,
}

/// Bisection (paired seeds, so coverage is monotone in ρ) for the minimal
/// radius achieving the target coverage at each n.
pub fn sweep_radius_scaling<R: Real>(cfg: &SweepConfig<'_, R>) -> Result<Vec<SweepRow<R>>> {
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let coverage_at = |rho: R| -> Result<R> {
            let sub = CoverageConfig {
                family: cfg.family,
                space: cfg.space,
                cost: cfg.cost,
                ground_truth: cfg.ground_truth,
                n,
                rho,
                trials: cfg.trials,
                master_seed: cfg.master_seed,
                solver_tol: cfg.solver_tol,
                tie_tol: cfg.tie_tol,
            };
            Ok(run_coverage(&sub)?.coverage)
        };
        let row = if coverage_at(R::zero())? >= cfg.target_coverage {
            SweepRow {
                n,
                rho_star: Some(R::zero()),
                rho_star_sqrt_n: Some(R::zero()),
            }
        } else if coverage_at(cfg.rho_cap)? < cfg.target_coverage {
            SweepRow {
                n,
                rho_star: None,
                rho_star_sqrt_n: None,
            }
        } else {
            let mut lo = R::zero();
            let mut hi = cfg.rho_cap;
            for _ in 0..cfg.bisect_iters {
                let mid = (lo + hi).half();
                if coverage_at(mid)? >= cfg.target_coverage {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let sqrt_n = R::from_usize(n).unwrap().sqrt();
            SweepRow {
                n,
                rho_star: Some(hi),
                rho_star_sqrt_n: Some(hi * sqrt_n),
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Regularized coverage (feasible-coupling right-hand side)
// ---------------------------------------------------------------------------

pub struct RegCoverageConfig<'a, R: Real> {
    pub family: &'a dyn Family<R>,
    pub space: &'a SampleSpace<R>,
    pub cost: &'a TransportCost<R>,
    pub ground_truth: &'a GroundTruth<R>,
    pub kernel: &'a ReferenceKernel<R>,
    pub reg: RegParams<R>,
    /// Valid bound on `‖F‖∞`, calibrating the dual upper bound.
    pub sup_norm: R,
    pub n: usize,
    pub rho: R,
    pub trials: usize,
    pub master_seed: u64,
    pub solver_tol: R,
}

/// Coverage of `R̂^{τ,ε}_ρ(f) ≥ E_{ξ∼P, ζ∼π₀(·|ξ)}[f(ζ)]`.
///
/// The right-hand side comes from the feasible coupling whose conditionals
/// equal π₀ and whose first marginal is P: its KL penalty vanishes by the
/// chain rule and its transport cost is at most `m_c ≤ ρ`.
pub fn run_coverage_reg<R: Real>(cfg: &RegCoverageConfig<'_, R>) -> Result<CoverageReport<R>> {
    let start = std::time::Instant::now();
    if cfg.family.member_count() == 0 {
        return Err(Error::Empty("family"));
    }
    let ctx = RegContext::new(cfg.kernel, cfg.cost, cfg.space)?;
    if !(cfg.rho > ctx.moments.m_c) {
        return Err(Error::RegInfeasible {
            rho: cfg.rho.lossy(),
            m_c: ctx.moments.m_c.lossy(),
        });
    }

    // E_{P ⊗ π0}[f] per member: table quadrature over ξ, kernel quadrature
    // over ζ
    let smoothed_means: Vec<R> = (0..cfg.family.member_count())
        .map(|m| {
            cfg.ground_truth.true_mean(|xi| {
                let w = ctx.quad.weights(xi);
                ctx.quad
                    .nodes()
                    .iter()
                    .zip(w.iter())
                    .map(|(node, &wk)| wk * cfg.family.eval_member(m, node))
                    .sum()
            })
        })
        .collect();

    let outcomes: Vec<Result<TrialRecord<R>>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = TrialSeed::new(cfg.master_seed, t);
            let sample = cfg.ground_truth.sample(cfg.n, &seed)?;
            let mut min_slack = R::infinity();
            let mut worst = Vec::new();
            for m in 0..cfg.family.member_count() {
                let res = robust_risk_reg_with(
                    &ctx,
                    &sample,
                    |p: &SamplePoint<R>| cfg.family.eval_member(m, p),
                    cfg.rho,
                    cfg.cost,
                    &cfg.reg,
                    cfg.sup_norm,
                    cfg.solver_tol,
                )?;
                let slack = res.value - smoothed_means[m];
                if slack < min_slack {
                    min_slack = slack;
                    worst = cfg.family.theta(m);
                }
            }
            Ok(TrialRecord {
                trial_index: t,
                seed: seed.stream_seed(),
                worst_theta: worst,
                min_slack,
            })
        })
        .collect();

    let guard = coverage_guard(&smoothed_means);
    let mut per_trial = Vec::with_capacity(cfg.trials);
    let mut covered = 0usize;
    let mut aborted = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(rec) => {
                if rec.min_slack >= -guard {
                    covered += 1;
                }
                per_trial.push(rec);
            }
            Err(_) => aborted += 1,
        }
    }
    let coverage = R::from_usize(covered).unwrap() / R::from_usize(cfg.trials).unwrap();
    Ok(CoverageReport {
        n: cfg.n,
        rho: cfg.rho,
        trials: cfg.trials,
        coverage,
        aborted,
        per_trial,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Uniform gap
// ---------------------------------------------------------------------------

pub struct GapConfig<'a, R: Real> {
    pub family: &'a dyn Family<R>,
    pub space: &'a SampleSpace<R>,
    pub cost: &'a TransportCost<R>,
    pub ground_truth: &'a GroundTruth<R>,
    pub lambda_low: R,
    /// Log-spaced μ probes in `(0, 1/λ_low]`.
    pub mu_points: usize,
    pub n: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub tie_tol: R,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapTrial<R> {
    pub trial_index: u64,
    pub seed: u64,
    pub gap: R,
    pub gap_sqrt_n: R,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport<R> {
    pub n: usize,
    pub trials: usize,
    pub lambda_low: R,
    pub per_trial: Vec<GapTrial<R>>,
}

fn mu_grid<R: Real>(lambda_low: R, points: usize) -> Vec<R> {
    let mu_max = lambda_low.recip();
    (0..points)
        .map(|j| {
            if points == 1 {
                mu_max
            } else {
                let t = R::from_usize(j).unwrap() / R::from_usize(points - 1).unwrap();
                mu_max * R::of(1e-3).powf(R::one() - t)
            }
        })
        .collect()
}

/// The trial's uniform-gap statistic for a given sample:
/// `max over (μ, θ) of E_P[ψ(μ,f)] − E_{P̂}[ψ(μ,f)]`.
fn gap_for_sample<R: Real>(
    cfg: &GapConfig<'_, R>,
    reference: &EmpiricalDistribution<R>,
    sample: &EmpiricalDistribution<R>,
) -> Result<R> {
    let mus = mu_grid(cfg.lambda_low, cfg.mu_points);
    let nodes = cfg.space.grid();
    let opts = InnerMaxOptions::new(cfg.tie_tol, cfg.family.refine_inner());
    let mut gap = R::neg_infinity();
    for m in 0..cfg.family.member_count() {
        let f = |p: &SamplePoint<R>| cfg.family.eval_member(m, p);
        for &mu in &mus {
            let lambda = mu.recip();
            let psi_at = |xi: &SamplePoint<R>| -> Result<R> {
                Ok(mu * inner_max_on(&f, lambda, xi, cfg.cost, &nodes, cfg.space, &opts)?.value)
            };
            let mut pop = R::zero();
            for (atom, &w) in reference.atoms.iter().zip(reference.weights.iter()) {
                pop = pop + w * psi_at(atom)?;
            }
            let mut emp = R::zero();
            for (atom, &w) in sample.atoms.iter().zip(sample.weights.iter()) {
                emp = emp + w * psi_at(atom)?;
            }
            gap = gap.max(pop - emp);
        }
    }
    Ok(gap)
}

/// Empirical uniform gap per trial over the (μ, θ) grid.
pub fn measure_uniform_gap<R: Real>(cfg: &GapConfig<'_, R>) -> Result<GapReport<R>> {
    if !(cfg.lambda_low > R::zero()) {
        return Err(Error::InvalidParameter(
            "lambda_low must be positive".into(),
        ));
    }
    if cfg.mu_points < 1 {
        return Err(Error::Empty("mu grid"));
    }
    let reference = cfg.ground_truth.reference_distribution()?;
    let sqrt_n = R::from_usize(cfg.n).unwrap().sqrt();

    let per_trial: Vec<Result<GapTrial<R>>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = TrialSeed::new(cfg.master_seed, t);
            let sample = cfg.ground_truth.sample(cfg.n, &seed)?;
            let gap = gap_for_sample(cfg, &reference, &sample)?;
            Ok(GapTrial {
                trial_index: t,
                seed: seed.stream_seed(),
                gap,
                gap_sqrt_n: gap * sqrt_n,
            })
        })
        .collect();

    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(GapReport {
        n: cfg.n,
        trials: cfg.trials,
        lambda_low: cfg.lambda_low,
        per_trial,
    })
}

// ---------------------------------------------------------------------------
// Excess-risk audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum GapSource<R> {
    /// Use a certified `α`, contributing `α/√n`.
    Certified { alpha: R },
    /// Measure the trial's own uniform gap over a μ-grid.
    Measured { lambda_low: R, mu_points: usize },
}

pub struct ExcessConfig<'a, R: Real> {
    pub family: &'a dyn Family<R>,
    pub space: &'a SampleSpace<R>,
    pub cost: &'a TransportCost<R>,
    pub ground_truth: &'a GroundTruth<R>,
    pub rho: R,
    pub n: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub lip: R,
    pub power_p: R,
    pub gap_source: GapSource<R>,
    pub solver_tol: R,
    pub tie_tol: R,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcessRow<R> {
    pub trial_index: u64,
    pub theta: Vec<R>,
    pub lhs: R,
    pub rhs: R,
    pub slack: R,
    pub violated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcessReport<R> {
    pub violations: usize,
    pub rows: Vec<ExcessRow<R>>,
}

/// Audits `R̂_ρ(f) ≤ E_P[f] + Lip (ρ + a_n)^{1/p}` per trial and member,
/// with `a_n` either the certified `α/√n` or the trial's measured gap.
pub fn run_excess<R: Real>(cfg: &ExcessConfig<'_, R>) -> Result<ExcessReport<R>> {
    if cfg.space.alphabets().iter().any(|&a| a > 1) {
        return Err(Error::MixedCost);
    }
    if (cfg.cost.power_q - cfg.power_p).abs() > R::of(1e-12) {
        return Err(Error::InvalidParameter(format!(
            "declared power p = {} does not match the cost exponent q = {}",
            cfg.power_p, cfg.cost.power_q
        )));
    }
    let true_means: Vec<R> = (0..cfg.family.member_count())
        .map(|m| cfg.ground_truth.true_mean(|p| cfg.family.eval_member(m, p)))
        .collect();
    let reference = cfg.ground_truth.reference_distribution()?;
    let opts = InnerMaxOptions::new(cfg.tie_tol, cfg.family.refine_inner());

    let rows: Vec<Result<Vec<ExcessRow<R>>>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = TrialSeed::new(cfg.master_seed, t);
            let sample = cfg.ground_truth.sample(cfg.n, &seed)?;
            let a_n = match cfg.gap_source {
                GapSource::Certified { alpha } => alpha / R::from_usize(cfg.n).unwrap().sqrt(),
                GapSource::Measured {
                    lambda_low,
                    mu_points,
                } => {
                    let gap_cfg = GapConfig {
                        family: cfg.family,
                        space: cfg.space,
                        cost: cfg.cost,
                        ground_truth: cfg.ground_truth,
                        lambda_low,
                        mu_points,
                        n: cfg.n,
                        trials: 0,
                        master_seed: cfg.master_seed,
                        tie_tol: cfg.tie_tol,
                    };
                    gap_for_sample(&gap_cfg, &reference, &sample)?.max(R::zero())
                }
            };
            let mut out = Vec::with_capacity(cfg.family.member_count());
            for m in 0..cfg.family.member_count() {
                let lhs = robust_risk(
                    &sample,
                    |p: &SamplePoint<R>| cfg.family.eval_member(m, p),
                    cfg.rho,
                    cfg.cost,
                    cfg.space,
                    cfg.solver_tol,
                    &opts,
                )?;
                let rhs = true_means[m] + cfg.lip * (cfg.rho + a_n).powf(cfg.power_p.recip());
                let slack = rhs - lhs;
                out.push(ExcessRow {
                    trial_index: t,
                    theta: cfg.family.theta(m),
                    lhs,
                    rhs,
                    slack,
                    violated: slack < -R::of(1e-9),
                });
            }
            Ok(out)
        })
        .collect();

    let mut flat = Vec::new();
    for r in rows {
        flat.extend(r?);
    }
    let violations = flat.iter().filter(|r| r.violated).count();
    Ok(ExcessReport {
        violations,
        rows: flat,
    })
}

/// Fixed 17-significant-digit float formatting used by every CSV writer.
pub fn fmt_g17<R: Real>(v: R) -> String {
    format!("{:.16e}", v.lossy())
}
