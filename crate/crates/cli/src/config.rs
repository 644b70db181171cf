//! JSON experiment configuration: schema, defaults and validation into the
//! core domain objects.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use wdrocert_core::losses::{family_constants, LossFamily};
use wdrocert_core::reg::{kernel_moments, KernelKind, ReferenceKernel, RegParams};
use wdrocert_core::space::{SampleSpace, TransportCost};
use wdrocert_core::experiments::{GroundTruth, GroundTruthKind};
use wdrocert_core::{FamilyConstants64,LossFamily64, SampleSpace64, TransportCost64};

fn default_grid_resolution() -> usize {
    41
}
fn default_quadrature_nodes() -> usize {
    41
}
fn default_trials() -> usize {
    200
}
fn default_delta() -> f64 {
    0.05
}
fn default_solver_tol() -> f64 {
    1e-8
}
fn default_n_list() -> Vec<usize> {
    vec![100]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_coverage_target() -> f64 {
    0.9
}
fn default_sweep_bisect_iters() -> usize {
    18
}
fn default_mu_points() -> usize {
    16
}
fn default_true() -> bool {
    true
}
fn default_p_norm() -> PNormCfg {
    PNormCfg::Number(2.0)
}
fn default_two() -> f64 {
    2.0
}
fn default_one() -> f64 {
    1.0
}

/// `p ∈ [1, ∞]`; JSON has no infinity literal, so `"inf"` is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PNormCfg {
    Number(f64),
    Name(PNormName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PNormName {
    Inf,
}

impl PNormCfg {
    pub fn value(self) -> f64 {
        match self {
            PNormCfg::Number(v) => v,
            PNormCfg::Name(PNormName::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub boxes: Vec<(f64, f64)>,
    #[serde(default)]
    pub alphabets: Vec<usize>,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "default_p_norm")]
    pub p_norm: PNormCfg,
    #[serde(default = "default_two")]
    pub power_q: f64,
    #[serde(default = "default_one")]
    pub label_weight_kappa: f64,
    #[serde(default = "default_one")]
    pub label_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyConfig {
    LeastSquares {
        theta_box: Vec<(f64, f64)>,
        theta_grid_resolution: usize,
    },
    Logistic {
        theta_box: Vec<(f64, f64)>,
        theta_grid_resolution: usize,
    },
    Hinge {
        theta_box: Vec<(f64, f64)>,
        theta_grid_resolution: usize,
    },
    Kmeans {
        theta_box: Vec<(f64, f64)>,
        theta_grid_resolution: usize,
        clusters: usize,
    },
    Tabulated {
        csv: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelConfig {
    TruncatedGaussian {
        sigma: f64,
        #[serde(default = "default_quadrature_nodes")]
        quadrature_nodes: usize,
    },
    Uniform {
        #[serde(default = "default_quadrature_nodes")]
        quadrature_nodes: usize,
    },
    TruncatedLaplace {
        scale: f64,
        #[serde(default = "default_quadrature_nodes")]
        quadrature_nodes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegConfig {
    #[serde(default)]
    pub tau: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruthConfig {
    UniformBox,
    TruncatedGaussian {
        mean: Vec<f64>,
        sigma: f64,
    },
    LabelMixture {
        class_means: Vec<Vec<f64>>,
        sigma: f64,
        class_probs: Vec<f64>,
    },
    Dataset {
        path: PathBuf,
        #[serde(default = "default_true")]
        with_replacement: bool,
    },
}

/// The one JSON config shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub cost: CostConfig,
    pub family: FamilyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg: Option<RegConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_list: Option<Vec<f64>>,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    /// Defaults to `1e-9 (1 + ‖F‖∞)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_tol: Option<f64>,
    #[serde(default = "default_coverage_target")]
    pub coverage_target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_cap: Option<f64>,
    #[serde(default = "default_sweep_bisect_iters")]
    pub sweep_bisect_iters: usize,
    #[serde(default = "default_mu_points")]
    pub mu_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    /// Overrides the numerically computed dual lower bound for `gap`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_low: Option<f64>,
    /// Lipschitz constant for the excess bound; defaults to the family's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip: Option<f64>,
    /// Certified alpha for the excess bound; defaults to the computed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excess_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degeneracy_tol: Option<f64>,
}

/// Fully validated experiment: core objects plus the parsed config.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub space: SampleSpace64,
    pub cost: TransportCost64,
    pub family: LossFamily64,
    pub constants: FamilyConstants64,
    pub kernel: Option<ReferenceKernel<f64>>,
    pub reg: Option<RegParams<f64>>,
    pub ground_truth: Option<GroundTruth<f64>>,
}

impl ExperimentConfig {
    /// Every radius this run should use; `rho` and `rho_list` are exclusive.
    pub fn rhos(&self) -> Result<Vec<f64>> {
        match (&self.rho, &self.rho_list) {
            (Some(_), Some(_)) => bail!("config sets both `rho` and `rho_list`; pick one"),
            (Some(r), None) => Ok(vec![*r]),
            (None, Some(list)) if !list.is_empty() => Ok(list.clone()),
            _ => bail!("config needs `rho` or a nonempty `rho_list` for this subcommand"),
        }
    }
}

/// Parses and validates a config file, resolving referenced paths relative
/// to its directory.
pub fn parse_config(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    build_experiment(config, base)
}

pub fn build_experiment(config: ExperimentConfig, base: &Path) -> Result<Experiment> {
    let space = SampleSpace::new(
        config.space.boxes.clone(),
        config.space.alphabets.clone(),
        config.space.grid_resolution,
    )?;
    let cost = TransportCost::new(
        config.cost.p_norm.value(),
        config.cost.power_q,
        config.cost.label_weight_kappa,
        config.cost.label_power,
    )?;

    let family = build_family(&config.family, &space, base)?;
    let constants = family_constants(&family, &cost)?;

    let kernel = match &config.kernel {
        None => None,
        Some(k) => Some(build_kernel(k)?),
    };
    let reg = match &config.reg {
        None => None,
        Some(r) => Some(RegParams::new(r.tau, r.epsilon)?),
    };
    let ground_truth = match &config.ground_truth {
        None => None,
        Some(g) => Some(build_ground_truth(g, &space, base)?),
    };

    // feasibility of the regularized problem is checked at parse time: the
    // dual upper bound needs rho > m_c
    if let (Some(kernel), Some(_)) = (&kernel, &reg) {
        if let Ok(rhos) = config.rhos() {
            let moments = kernel_moments(kernel, &cost, &space)?;
            for &rho in &rhos {
                if rho <= moments.m_c {
                    bail!(
                        "regularized problem infeasible: rho = {rho} does not exceed the kernel \
                         moment m_c = {}; raise rho so the dual interval [0, 2*sup_norm/(rho - m_c)] \
                         exists",
                        moments.m_c
                    );
                }
            }
        }
    }

    Ok(Experiment {
        config,
        space,
        cost,
        family,
        constants,
        kernel,
        reg,
        ground_truth,
    })
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn build_family(
    cfg: &FamilyConfig,
    space: &SampleSpace64,
    base: &Path,
) -> Result<LossFamily64> {
    let family = match cfg {
        FamilyConfig::LeastSquares {
            theta_box,
            theta_grid_resolution,
        } => LossFamily::least_squares(theta_box.clone(), *theta_grid_resolution, space)?,
        FamilyConfig::Logistic {
            theta_box,
            theta_grid_resolution,
        } => LossFamily::logistic(theta_box.clone(), *theta_grid_resolution, space)?,
        FamilyConfig::Hinge {
            theta_box,
            theta_grid_resolution,
        } => LossFamily::hinge(theta_box.clone(), *theta_grid_resolution, space)?,
        FamilyConfig::Kmeans {
            theta_box,
            theta_grid_resolution,
            clusters,
        } => LossFamily::kmeans(theta_box.clone(), *theta_grid_resolution, *clusters, space)?,
        FamilyConfig::Tabulated { csv } => {
            let path = resolve(base, csv);
            if !path.exists() {
                return Err(anyhow!(
                    "tabulated family csv {} does not exist",
                    path.display()
                ));
            }
            LossFamily::tabulated_from_csv(&path, space)?
        }
    };
    Ok(family)
}

fn build_kernel(cfg: &KernelConfig) -> Result<ReferenceKernel<f64>> {
    let kernel = match *cfg {
        KernelConfig::TruncatedGaussian {
            sigma,
            quadrature_nodes,
        } => ReferenceKernel::new(KernelKind::TruncatedGaussian { sigma }, quadrature_nodes)?,
        KernelConfig::Uniform { quadrature_nodes } => {
            ReferenceKernel::new(KernelKind::Uniform, quadrature_nodes)?
        }
        KernelConfig::TruncatedLaplace {
            scale,
            quadrature_nodes,
        } => ReferenceKernel::new(KernelKind::TruncatedLaplace { scale }, quadrature_nodes)?,
    };
    Ok(kernel)
}

fn build_ground_truth(
    cfg: &GroundTruthConfig,
    space: &SampleSpace64,
    base: &Path,
) -> Result<GroundTruth<f64>> {
    let gt = match cfg {
        GroundTruthConfig::UniformBox => GroundTruth::new(GroundTruthKind::UniformBox, space)?,
        GroundTruthConfig::TruncatedGaussian { mean, sigma } => GroundTruth::new(
            GroundTruthKind::TruncatedGaussian {
                mean: mean.clone(),
                sigma: *sigma,
            },
            space,
        )?,
        GroundTruthConfig::LabelMixture {
            class_means,
            sigma,
            class_probs,
        } => GroundTruth::new(
            GroundTruthKind::LabelMixture {
                class_means: class_means.clone(),
                sigma: *sigma,
                class_probs: class_probs.clone(),
            },
            space,
        )?,
        GroundTruthConfig::Dataset {
            path,
            with_replacement,
        } => {
            let path = resolve(base, path);
            if !path.exists() {
                return Err(anyhow!("dataset {} does not exist", path.display()));
            }
            GroundTruth::dataset_from_csv(&path, space, *with_replacement)?
        }
    };
    Ok(gt)
}

impl Experiment {
    pub fn tie_tol(&self) -> f64 {
        self.config
            .tie_tol
            .unwrap_or(1e-9 * (1.0 + self.constants.sup_norm))
    }
}
