//! Experiment configuration: one JSON document per run.
//!
//! Unknown keys are rejected at every level so typos fail loudly instead of
//! silently falling back to defaults. Each command validates that the
//! sections it needs are present; everything else may be omitted. The
//! resolved configuration (after `--seed` / `--out` overrides) is written
//! next to the run's outputs so any experiment can be rerun from its own
//! artifacts.

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSchedule, ScheduleKind, Weighting};
use crate::error::{Error, Result};
use crate::tensorgrad::Activation;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every RNG stream in the run derives from it.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub weighting: WeightingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_net: Option<NetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // The run seed is authoritative; the nested training seed always
        // follows it so one number pins the whole run.
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn to_pretty_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn require_dataset(&self) -> Result<&DatasetConfig> {
        self.dataset
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a \"dataset\" section".into()))
    }

    pub fn require_score_net(&self) -> Result<&NetConfig> {
        self.score_net
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a \"score_net\" section".into()))
    }

    pub fn require_generator(&self) -> Result<&GeneratorConfig> {
        self.generator
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a \"generator\" section".into()))
    }
}

/// Diffusion schedule section. `t_max` also parses from the key `T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, alias = "T", skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_max: Option<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            kind: ScheduleKind::Ve,
            t_min: None,
            t_max: None,
            beta_min: None,
            beta_max: None,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        match self.kind {
            ScheduleKind::Ve => {
                if self.beta_min.is_some() || self.beta_max.is_some() {
                    return Err(Error::Config(
                        "beta_min/beta_max only apply to the vp schedule".into(),
                    ));
                }
                let t_min = self.t_min.unwrap_or(1e-3);
                let t_max = self.t_max.unwrap_or(10.0);
                DiffusionSchedule::ve(t_min, t_max)
            }
            ScheduleKind::Vp => {
                let t_min = self.t_min.unwrap_or(1e-3);
                let t_max = self.t_max.unwrap_or(1.0);
                let beta_min = self.beta_min.unwrap_or(0.1);
                let beta_max = self.beta_max.unwrap_or(20.0);
                DiffusionSchedule::vp(beta_min, beta_max, t_min, t_max)
            }
        }
    }
}

/// Time weighting section.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightingConfig {
    Ramp,
    Constant { value: f64 },
    SigmaSquared,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig::Ramp
    }
}

impl WeightingConfig {
    pub fn build(&self) -> Weighting {
        match *self {
            WeightingConfig::Ramp => Weighting::Ramp,
            WeightingConfig::Constant { value } => Weighting::Constant(value),
            WeightingConfig::SigmaSquared => Weighting::SigmaSquared,
        }
    }
}

/// Synthetic dataset section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Diagonal Gaussian with explicit mean and per-coordinate variance.
    Gaussian {
        #[serde(default = "default_mean")]
        mean: Vec<f64>,
        #[serde(default = "default_var")]
        var: Vec<f64>,
    },
    /// Equal-weight Gaussian bumps spaced evenly on a circle.
    GaussianMixtureRing {
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_ring_noise")]
        noise_std: f64,
    },
    /// Two interleaved half-circles with isotropic jitter.
    TwoMoons {
        #[serde(default = "default_moon_radius")]
        radius: f64,
        #[serde(default = "default_moon_noise")]
        noise_std: f64,
    },
    /// Uniform mass on the black squares of a unit-cell checkerboard
    /// covering [-range, range]^2.
    Checkerboard {
        #[serde(default = "default_checker_range")]
        range: f64,
    },
}

fn default_mean() -> Vec<f64> {
    vec![0.0]
}
fn default_var() -> Vec<f64> {
    vec![1.0]
}
fn default_components() -> usize {
    8
}
fn default_radius() -> f64 {
    2.0
}
fn default_ring_noise() -> f64 {
    0.25
}
fn default_moon_radius() -> f64 {
    1.0
}
fn default_moon_noise() -> f64 {
    0.1
}
fn default_checker_range() -> f64 {
    2.0
}

impl DatasetConfig {
    pub fn data_dim(&self) -> usize {
        match self {
            DatasetConfig::Gaussian { mean, .. } => mean.len(),
            _ => 2,
        }
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Score network architecture: hidden widths only, since input and output
/// sizes follow from the data dimension.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

impl NetConfig {
    pub fn activation(&self) -> Activation {
        self.activation.unwrap_or(Activation::Softplus)
    }
}

/// Generator architecture and initialization strategy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub init: GeneratorInit,
    /// Hidden widths for a fresh generator. A denoiser-initialized one
    /// copies the teacher's hidden stack instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_sigma: Option<f64>,
    /// Noise level whose denoiser the generator imitates at init.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorInit {
    Fresh,
    Tweedie,
}

impl Default for GeneratorInit {
    fn default() -> Self {
        GeneratorInit::Fresh
    }
}

/// Evaluation knobs shared by the metrics probe and the sample/eval commands.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Sample count per side of the two-sample comparison.
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { samples: 512 }
    }
}
