//! Experiment configuration: flat key = value sections in TOML, human-diffable
//! and overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pdmp_core::models::morris_lecar::{MlParams, DEFAULT_INITIAL_STATE};
use pdmp_core::models::telegraph::{AffineField, TelegraphParams};
use pdmp_core::StructuralParams;

/// Marker attached to errors raised while loading or validating
/// configuration; drives the config-error exit code.
#[derive(Debug)]
pub struct ConfigStage;

impl std::fmt::Display for ConfigStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error")
    }
}

impl std::error::Error for ConfigStage {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub model: ModelKind,
    /// Experiment horizon T.
    pub horizon: f64,
    /// Dominating thinning rate.
    pub rate_bound: f64,
    /// Base (coarsest) multilevel step h*.
    pub base_step: f64,
    /// Target accuracies, positive and decreasing.
    pub epsilons: Vec<f64>,
    pub replications: usize,
    /// Estimator used when the command line does not name one.
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub threads: usize,

    pub initial_state: InitialState,
    #[serde(default)]
    pub morris_lecar: MlSection,
    #[serde(default)]
    pub telegraph: Option<TelegraphSection>,

    pub structural: StructuralSection,
    #[serde(default)]
    pub ground_truth: GroundTruthSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub variance_decay: VarianceDecaySection,
    #[serde(default)]
    pub structural_estimation: StructuralEstimationSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MorrisLecar,
    Telegraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub enum EstimatorKind {
    #[serde(rename = "mc")]
    Mc,
    #[serde(rename = "mlmc-plain")]
    MlmcPlain,
    #[serde(rename = "mlmc-case2")]
    MlmcCase2,
    #[serde(rename = "mlmc-case3")]
    MlmcCase3,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Mc => "mc",
            EstimatorKind::MlmcPlain => "mlmc-plain",
            EstimatorKind::MlmcCase2 => "mlmc-case2",
            EstimatorKind::MlmcCase3 => "mlmc-case3",
        }
    }
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::MlmcCase3
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub theta: usize,
    pub nu: f64,
}

/// Morris-Lecar parameters; every field optional, defaulting to the standard
/// simulation values.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlSection {
    pub v1: Option<f64>,
    pub v2: Option<f64>,
    pub v3: Option<f64>,
    pub v4: Option<f64>,
    pub lambda_k_bar: Option<f64>,
    pub capacitance: Option<f64>,
    pub g_leak: Option<f64>,
    pub v_leak: Option<f64>,
    pub g_ca: Option<f64>,
    pub v_ca: Option<f64>,
    pub g_k: Option<f64>,
    pub v_k: Option<f64>,
    pub i_app: Option<f64>,
    pub n_k: Option<usize>,
}

impl MlSection {
    pub fn params(&self) -> MlParams {
        let d = MlParams::default();
        MlParams {
            v1: self.v1.unwrap_or(d.v1),
            v2: self.v2.unwrap_or(d.v2),
            v3: self.v3.unwrap_or(d.v3),
            v4: self.v4.unwrap_or(d.v4),
            lambda_k_bar: self.lambda_k_bar.unwrap_or(d.lambda_k_bar),
            capacitance: self.capacitance.unwrap_or(d.capacitance),
            g_leak: self.g_leak.unwrap_or(d.g_leak),
            v_leak: self.v_leak.unwrap_or(d.v_leak),
            g_ca: self.g_ca.unwrap_or(d.g_ca),
            v_ca: self.v_ca.unwrap_or(d.v_ca),
            g_k: self.g_k.unwrap_or(d.g_k),
            v_k: self.v_k.unwrap_or(d.v_k),
            i_app: self.i_app.unwrap_or(d.i_app),
            n_k: self.n_k.unwrap_or(d.n_k),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelegraphSection {
    pub rates: [f64; 2],
    pub field0: FieldSpec,
    pub field1: FieldSpec,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub offset: f64,
    pub slope: f64,
}

impl TelegraphSection {
    pub fn params(&self) -> TelegraphParams {
        TelegraphParams {
            rates: self.rates,
            fields: [
                AffineField { offset: self.field0.offset, slope: self.field0.slope },
                AffineField { offset: self.field1.offset, slope: self.field1.slope },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralBlock {
    pub alpha: f64,
    pub beta: f64,
    pub c1: f64,
    pub v1: f64,
    pub var_x: f64,
}

impl StructuralBlock {
    pub fn params(&self) -> StructuralParams {
        StructuralParams {
            alpha: self.alpha,
            beta: self.beta,
            c1: self.c1,
            v1: self.v1,
            var_x: self.var_x,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralSection {
    pub plain: StructuralBlock,
    pub case2: Option<StructuralBlock>,
    pub case3: Option<StructuralBlock>,
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSection {
    /// Reference value of E[X]; computed by the documented high-accuracy run
    /// when absent.
    pub mean: Option<f64>,
    pub step: Option<f64>,
    pub samples: Option<u64>,
}

impl GroundTruthSection {
    pub fn step(&self) -> f64 {
        self.step.unwrap_or(1e-3)
    }
    pub fn samples(&self) -> u64 {
        self.samples.unwrap_or(1_000_000)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_output_step")]
    pub output_step: f64,
    /// Horizon for trajectory output; defaults to the experiment horizon.
    pub horizon: Option<f64>,
}

fn default_paths() -> usize {
    10
}

fn default_output_step() -> f64 {
    0.1
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { paths: default_paths(), output_step: default_output_step(), horizon: None }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceDecaySection {
    #[serde(default = "default_decay_step")]
    pub step: f64,
    #[serde(default = "default_refinement")]
    pub refinement: u64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_decay_samples")]
    pub samples: u64,
    #[serde(default = "default_true")]
    pub include_case2: bool,
}

fn default_decay_step() -> f64 {
    1.0
}
fn default_refinement() -> u64 {
    4
}
fn default_levels() -> usize {
    7
}
fn default_decay_samples() -> u64 {
    10_000
}
fn default_true() -> bool {
    true
}

impl Default for VarianceDecaySection {
    fn default() -> Self {
        VarianceDecaySection {
            step: default_decay_step(),
            refinement: default_refinement(),
            levels: default_levels(),
            samples: default_decay_samples(),
            include_case2: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralEstimationSection {
    #[serde(default = "default_est_samples")]
    pub samples: u64,
    #[serde(default = "default_v1_step")]
    pub v1_step: f64,
    #[serde(default = "default_refinement")]
    pub v1_refinement: u64,
    #[serde(default = "default_c1_step")]
    pub c1_step: f64,
    #[serde(default = "default_refinement")]
    pub c1_refinement: u64,
    #[serde(default = "default_var_step")]
    pub var_step: f64,
}

fn default_est_samples() -> u64 {
    10_000
}
fn default_v1_step() -> f64 {
    0.1
}
fn default_c1_step() -> f64 {
    1.0
}
fn default_var_step() -> f64 {
    0.025
}

impl Default for StructuralEstimationSection {
    fn default() -> Self {
        StructuralEstimationSection {
            samples: default_est_samples(),
            v1_step: default_v1_step(),
            v1_refinement: default_refinement(),
            c1_step: default_c1_step(),
            c1_refinement: default_refinement(),
            var_step: default_var_step(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: Config =
            toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            bail!("horizon must be non-negative, got {}", self.horizon);
        }
        if !(self.rate_bound > 0.0) {
            bail!("rate_bound must be positive, got {}", self.rate_bound);
        }
        if !(self.base_step > 0.0) {
            bail!("base_step must be positive, got {}", self.base_step);
        }
        if self.epsilons.is_empty() {
            bail!("epsilons must not be empty");
        }
        for w in self.epsilons.windows(2) {
            if !(w[1] < w[0]) {
                bail!("epsilons must be strictly decreasing, got {:?}", self.epsilons);
            }
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0)) {
            bail!("epsilons must be positive, got {:?}", self.epsilons);
        }
        if self.replications < 1 {
            bail!("replications must be at least 1");
        }
        if self.model == ModelKind::Telegraph && self.telegraph.is_none() {
            bail!("model = \"telegraph\" requires a [telegraph] section");
        }
        Ok(())
    }

    /// Structural parameters for one estimator kind.
    pub fn structural_for(&self, estimator: EstimatorKind) -> Result<StructuralParams> {
        let block = match estimator {
            EstimatorKind::Mc | EstimatorKind::MlmcPlain => Some(&self.structural.plain),
            EstimatorKind::MlmcCase2 => self.structural.case2.as_ref(),
            EstimatorKind::MlmcCase3 => self.structural.case3.as_ref(),
        };
        let block = block.ok_or_else(|| {
            anyhow::anyhow!(
                "config lacks a [structural.{}] block required by estimator {}",
                match estimator {
                    EstimatorKind::MlmcCase2 => "case2",
                    EstimatorKind::MlmcCase3 => "case3",
                    _ => "plain",
                },
                estimator.label()
            )
            .context(ConfigStage)
        })?;
        let params = block.params();
        params.validate().map_err(|e| anyhow::anyhow!("structural block invalid: {e}"))?;
        Ok(params)
    }
}

/// Default Morris-Lecar experiment configuration (written by `--emit-config`).
pub fn default_config_toml() -> String {
    format!(
        r#"# Morris-Lecar thinning / multilevel Monte Carlo experiment.
seed = 42
model = "morris_lecar"
horizon = 30.0
rate_bound = 10.0
base_step = 0.1
epsilons = [0.5, 0.25, 0.125, 0.0625]
replications = 20
estimator = "mlmc-case3"
output_dir = "out"

# Calibrated default initial state; the deterministic trajectory started here
# reproduces v(30) = -35.3083.
[initial_state]
theta = {theta}
nu = {nu}

# Structural parameters measured at this horizon and initial state with the
# `structural` subcommand (10^4 coupled pairs per constant).
[structural.plain]
alpha = 1.0
beta = 1.0
c1 = 4.89
v1 = 31.7
var_x = 333.7

[structural.case3]
alpha = 1.0
beta = 2.0
c1 = 4.46
v1 = 619.4
var_x = 333.7

[ground_truth]
# mean = -31.36   # uncomment to skip the high-accuracy reference run
step = 0.001
samples = 1000000

[simulate]
paths = 10
output_step = 0.1
horizon = 100.0

[variance_decay]
step = 1.0
refinement = 4
levels = 7
samples = 10000
include_case2 = true

[structural_estimation]
samples = 10000
v1_step = 0.1
v1_refinement = 4
c1_step = 1.0
c1_refinement = 4
var_step = 0.025
"#,
        theta = DEFAULT_INITIAL_STATE.0,
        nu = DEFAULT_INITIAL_STATE.1,
    )
}
