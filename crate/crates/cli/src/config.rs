//! Experiment configuration: full embedded defaults for two profiles,
//! overridable per key from a TOML file.
//!
//! The `paper` profile carries the published hyper-parameters; the `desk`
//! profile shrinks the encoder and caps runtimes so the full experiment
//! matrix finishes on one workstation. A config file never has to repeat
//! defaults: it is deep-merged onto the selected profile key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bers_core::neural_linear::{Optimizer, OutputTransform, RefineScope, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Paper,
    Desk,
}

/// Shared-encoder model settings used by the optimization commands and, with
/// `[supply] hidden` swapped in, by the supply-chain commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub refine_scope: RefineScope,
    /// Transform applied to raw targets before regression; the optimization
    /// benchmarks use `log1p`, the supply commands always use identity
    /// because rewards may be negative.
    pub transform: OutputTransform,
    pub pretrain_batches: usize,
    pub batch_size: usize,
}

impl ModelConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            optimizer: self.optimizer,
            refine_scope: self.refine_scope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationConfig {
    pub dim: usize,
    pub np: usize,
    pub cr: f64,
    pub f: f64,
    /// Source generation stops at this transformed fitness.
    pub source_fitness: f64,
    pub generation_cap: usize,
    pub episodes: usize,
    /// Transfer reuse probability is `reuse_rate^m` in episode m.
    pub reuse_rate: f64,
    /// Constant reuse probability for the multi-task command.
    pub multitask_p: f64,
    /// Gradient batches per post-episode refinement.
    pub refine_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyExperimentConfig {
    /// Encoder hidden layers for the supply model; the remaining model
    /// settings come from `[model]`.
    pub hidden: Vec<usize>,
    /// Raw environment steps collected per source scenario.
    pub collect_steps: usize,
    /// Random subsample kept from the raw collection.
    pub keep_samples: usize,
    /// Fraction trimmed from each reward tail of a kept sample.
    pub trim_fraction: f64,
    pub episodes: usize,
    /// One environment episode per reuse episode.
    pub horizon: usize,
    pub reuse_rate: f64,
    pub refine_batches: usize,
    /// Uniform reuse batch size.
    pub inject_batch: usize,
    /// Episodes after which a posterior snapshot is written.
    pub snapshots: Vec<usize>,
    /// Relative preference of the exploration policy for cheap routes.
    pub cheap_bias: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Base seed; trial t derives its streams from `seed + t`.
    pub seed: u64,
    /// Trial count; unset falls back to the command default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub optimization: OptimizationConfig,
    pub supply: SupplyExperimentConfig,
}

impl ExperimentConfig {
    pub fn paper() -> Self {
        ExperimentConfig {
            profile: Profile::Paper,
            seed: 9700,
            trials: None,
            out: PathBuf::from("runs"),
            model: ModelConfig {
                hidden: vec![200, 200],
                feature_dim: 20,
                learning_rate: 1e-4,
                weight_decay: 1e-4,
                optimizer: Optimizer::Sgd,
                refine_scope: RefineScope::EncoderAndHeads,
                transform: OutputTransform::Log1p,
                pretrain_batches: 4000,
                batch_size: 64,
            },
            optimization: OptimizationConfig {
                dim: 10,
                np: 32,
                cr: 0.7,
                f: 0.5,
                source_fitness: 0.15,
                generation_cap: 2000,
                episodes: 200,
                reuse_rate: 0.99,
                multitask_p: 0.3,
                refine_batches: 1,
            },
            supply: SupplyExperimentConfig {
                hidden: vec![300, 200],
                collect_steps: 30_000,
                keep_samples: 10_000,
                trim_fraction: 0.025,
                episodes: 200,
                horizon: 200,
                reuse_rate: 0.95,
                refine_batches: 20,
                inject_batch: 32,
                snapshots: vec![0, 10, 50, 100, 200],
                cheap_bias: 3,
            },
        }
    }

    pub fn desk() -> Self {
        let mut config = ExperimentConfig::paper();
        config.profile = Profile::Desk;
        config.trials = Some(5);
        config.model.hidden = vec![64, 64];
        config.model.feature_dim = 8;
        config.optimization.generation_cap = 400;
        config.supply.hidden = vec![64, 64];
        config.supply.collect_steps = 10_000;
        config
    }

    /// Profile defaults with an optional TOML file merged on top, key by key.
    pub fn load(profile: Profile, path: Option<&Path>) -> anyhow::Result<Self> {
        let base = match profile {
            Profile::Paper => ExperimentConfig::paper(),
            Profile::Desk => ExperimentConfig::desk(),
        };
        let Some(path) = path else {
            return Ok(base);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let overrides: toml::Value = text
            .parse()
            .map_err(|e| crate::CliError::Config(format!("{}: {e}", path.display())))?;
        let mut value = toml::Value::try_from(&base)?;
        merge(&mut value, overrides);
        let merged: ExperimentConfig = value
            .try_into()
            .map_err(|e| crate::CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(merged)
    }

    pub fn resolved_trials(&self, command_default: usize) -> usize {
        self.trials.unwrap_or(command_default)
    }

    /// Hash of the effective configuration with the output location blanked,
    /// so moving an experiment between directories keeps its identity.
    pub fn hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.out = PathBuf::new();
        let text = toml::to_string(&normalized).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// Recursive table merge: override scalars and arrays replace, tables merge.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}
