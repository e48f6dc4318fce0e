//! Experiment configuration: a strict, versioned JSON schema.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use pomdp_ope::data::{GenerationMode, WindowConfig};
use pomdp_ope::dynamics::DynamicsScale;
use pomdp_ope::estimators::EstimatorConfig;
use pomdp_ope::model::random::{random_policy, random_pomdp};
use pomdp_ope::model::{TabularPolicy, TabularPomdp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SPEC_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec_version: String,
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    pub behavior: PolicySpec,
    pub evaluation: PolicySpec,
    pub window: WindowConfig,
    #[serde(default)]
    pub history_features: HistoryFeatureKind,
    pub estimators: Vec<EstimatorSpec>,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Initial samples per dataset; defaults to `n`.
    #[serde(default)]
    pub n_init: Option<usize>,
    #[serde(default = "default_mode")]
    pub generation_mode: GenerationMode,
    #[serde(default)]
    pub dynamics: Option<DynamicsSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_mode() -> GenerationMode {
    GenerationMode::IidPerTuple
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Inline(TabularPomdp),
    Path(PathBuf),
    Random {
        n_states: usize,
        n_obs: usize,
        n_actions: usize,
        gamma: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Inline(TabularPolicy),
    Path(PathBuf),
    Uniform,
    /// Rows `mix * uniform + (1 - mix) * Dirichlet(1)`.
    Random { uniform_mix: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryFeatureKind {
    #[default]
    OneHot,
    /// `H := O`, the fully observed reduction.
    CurrentObservation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Linear,
    Gaussian { bandwidth: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    MinimaxLinear {
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default)]
        alpha: f64,
        #[serde(default)]
        alpha_prime: f64,
    },
    FiniteHorizonLinear {
        horizon: usize,
    },
    MinimaxRkhs {
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default)]
        alpha: f64,
        #[serde(default)]
        alpha_prime: f64,
        kernel: KernelSpec,
    },
    Sis {
        horizon_cap: usize,
    },
    /// Off-policy LSTD on fully observed models, plus the equivalence row
    /// against the minimax closed form with `H := O`.
    Lstd,
}

fn one() -> f64 {
    1.0
}

impl EstimatorSpec {
    /// Minimax hyperparameters; `lambda` defaults to 1, the ridge terms to 0.
    pub fn hyper(&self) -> Option<EstimatorConfig> {
        match *self {
            EstimatorSpec::MinimaxLinear {
                lambda,
                alpha,
                alpha_prime,
            }
            | EstimatorSpec::MinimaxRkhs {
                lambda,
                alpha,
                alpha_prime,
                ..
            } => Some(EstimatorConfig {
                lambda,
                alpha,
                alpha_prime,
            }),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::MinimaxLinear { .. } => "minimax_linear",
            EstimatorSpec::FiniteHorizonLinear { .. } => "finite_horizon_linear",
            EstimatorSpec::MinimaxRkhs { .. } => "minimax_rkhs",
            EstimatorSpec::Sis { .. } => "sis",
            EstimatorSpec::Lstd => "lstd",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    /// Each sequence is a list of `[o, a]` pairs.
    pub sequences: Vec<Vec<(usize, usize)>>,
    #[serde(default)]
    pub scale: DynamicsScale,
    /// Sample size for the empirical estimate; population only if absent.
    #[serde(default)]
    pub n: Option<usize>,
}

/// A validated experiment with its model and policies materialized.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: TabularPomdp,
    pub behavior: TabularPolicy,
    pub evaluation: TabularPolicy,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("parsing experiment config")
    }

    /// Checks everything that does not need the model.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.spec_version == SPEC_VERSION,
            "unsupported spec_version {:?} (expected {SPEC_VERSION:?})",
            self.spec_version
        );
        ensure!(!self.estimators.is_empty(), "at least one estimator is required");
        ensure!(!self.n_grid.is_empty(), "n_grid must not be empty");
        ensure!(
            self.n_grid.windows(2).all(|w| w[0] < w[1]),
            "n_grid must be strictly increasing"
        );
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        self.window.validate()?;
        for e in &self.estimators {
            match e {
                EstimatorSpec::MinimaxLinear { .. } | EstimatorSpec::MinimaxRkhs { .. } => {
                    e.hyper().expect("minimax spec").validate()?
                }
                EstimatorSpec::FiniteHorizonLinear { horizon } => ensure!(*horizon >= 1, "horizon must be at least 1"),
                EstimatorSpec::Sis { horizon_cap } => ensure!(*horizon_cap >= 1, "horizon_cap must be at least 1"),
                EstimatorSpec::Lstd => {}
            }
        }
        Ok(())
    }

    /// Resolves relative paths against `base` and materializes the model
    /// and policies.
    pub fn resolve(self, base: &Path) -> Result<Experiment> {
        self.validate()?;
        let model = match &self.model {
            ModelSpec::Inline(m) => m.clone(),
            ModelSpec::Path(p) => TabularPomdp::load(base.join(p)).with_context(|| format!("loading model {}", p.display()))?,
            ModelSpec::Random {
                n_states,
                n_obs,
                n_actions,
                gamma,
                seed,
            } => random_pomdp(*n_states, *n_obs, *n_actions, *gamma, &mut ChaCha8Rng::seed_from_u64(*seed)),
        };
        model.validate()?;
        let policy = |spec: &PolicySpec, role: &str| -> Result<TabularPolicy> {
            let p = match spec {
                PolicySpec::Inline(p) => p.clone(),
                PolicySpec::Path(path) => {
                    let text = std::fs::read_to_string(base.join(path))
                        .with_context(|| format!("reading {role} policy {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {role} policy"))?
                }
                PolicySpec::Uniform => TabularPolicy::uniform(self.window.m, model.n_obs, model.n_actions)?,
                PolicySpec::Random { uniform_mix, seed } => random_policy(
                    self.window.m,
                    model.n_obs,
                    model.n_actions,
                    *uniform_mix,
                    &mut ChaCha8Rng::seed_from_u64(*seed),
                )?,
            };
            p.validate()?;
            ensure!(
                p.memory == self.window.m,
                "{role} policy memory {} differs from window m = {}",
                p.memory,
                self.window.m
            );
            ensure!(
                p.n_obs == model.n_obs && p.n_actions == model.n_actions,
                "{role} policy alphabet does not match the model"
            );
            Ok(p)
        };
        let behavior = policy(&self.behavior, "behavior")?;
        let evaluation = policy(&self.evaluation, "evaluation")?;
        if self.history_features == HistoryFeatureKind::CurrentObservation && self.window.m != 0 {
            bail!("current_observation history features require m = 0");
        }
        Ok(Experiment {
            config: self,
            model,
            behavior,
            evaluation,
        })
    }
}

/// Loads, validates and resolves a config file.
pub fn load_experiment(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg = ExperimentConfig::from_json_str(&text)?;
    let base = path.parent().ok_or_else(|| anyhow!("config path has no parent"))?;
    cfg.resolve(base)
}
