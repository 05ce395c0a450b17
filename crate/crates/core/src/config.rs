//! Run configuration: one JSON file (plus CLI overrides) drives a whole
//! experiment. Defaults reproduce the reference hyperparameters: 100 search
//! iterations, Dirichlet alpha 5.0 / epsilon 0.25, temperature 1.0, replay
//! buffer 10000, curriculum 5/30/50 epochs at length caps 4/8/unlimited,
//! SGD lr 0.001 momentum 0.8.

use crate::env::Environment;
use crate::image_env::{ImageEnv, ImageEnvConfig};
use crate::mcts::MctsConfig;
use crate::nn::{HeadKind, NetworkConfig};
use crate::pgm;
use crate::toy_env::{ToyConfig, ToyEnv, ToyVariant};
use crate::training::TrainingConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config schema: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "source", rename_all = "lowercase")]
pub enum PoolConfig {
    /// Every `.pgm` file in a directory, in filename order.
    Directory { dir: PathBuf },
    /// Reproducible generated textures.
    Procedural { seed: u64, count: usize },
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig::Procedural {
            seed: 7,
            count: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Toy {
        variant: ToyVariant,
        #[serde(default = "default_grid_size")]
        grid_size: usize,
        #[serde(default = "default_shape_count")]
        shape_count: usize,
        #[serde(default = "default_cell_pixels")]
        cell_pixels: usize,
    },
    Image {
        #[serde(default = "default_image_side")]
        side: u32,
        #[serde(default = "default_image_max_len")]
        max_len: usize,
        #[serde(default = "default_image_max_repeats")]
        max_repeats: usize,
        #[serde(default)]
        pool: PoolConfig,
    },
}

fn default_grid_size() -> usize {
    3
}
fn default_shape_count() -> usize {
    3
}
fn default_cell_pixels() -> usize {
    9
}
fn default_image_side() -> u32 {
    32
}
fn default_image_max_len() -> usize {
    10
}
fn default_image_max_repeats() -> usize {
    2
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Toy {
            variant: ToyVariant::Free,
            grid_size: default_grid_size(),
            shape_count: default_shape_count(),
            cell_pixels: default_cell_pixels(),
        }
    }
}

impl EnvConfig {
    /// CLI shorthand: `toy-constrained`, `toy-free`, or `image`.
    pub fn from_shorthand(name: &str) -> Result<Self, ConfigError> {
        match name {
            "toy-constrained" => Ok(EnvConfig::Toy {
                variant: ToyVariant::Constrained,
                grid_size: default_grid_size(),
                shape_count: default_shape_count(),
                cell_pixels: default_cell_pixels(),
            }),
            "toy-free" => Ok(EnvConfig::Toy {
                variant: ToyVariant::Free,
                grid_size: default_grid_size(),
                shape_count: default_shape_count(),
                cell_pixels: default_cell_pixels(),
            }),
            "image" => Ok(EnvConfig::Image {
                side: default_image_side(),
                max_len: default_image_max_len(),
                max_repeats: default_image_max_repeats(),
                pool: PoolConfig::default(),
            }),
            other => Err(ConfigError::Invalid(format!(
                "unknown environment '{other}' (expected toy-constrained, toy-free, or image)"
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            EnvConfig::Toy {
                variant: ToyVariant::Constrained,
                ..
            } => "toy-constrained".into(),
            EnvConfig::Toy {
                variant: ToyVariant::Free,
                ..
            } => "toy-free".into(),
            EnvConfig::Image { .. } => "image".into(),
        }
    }
}

/// A constructed environment with its concrete type retained for
/// env-specific serialization.
pub enum BuiltEnv {
    Toy(ToyEnv),
    Image(ImageEnv),
}

impl BuiltEnv {
    pub fn as_env(&self) -> &dyn Environment {
        match self {
            BuiltEnv::Toy(env) => env,
            BuiltEnv::Image(env) => env,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub num_pairs: usize,
    pub ks: Vec<usize>,
    /// Search depth cap at evaluation; `None` means the environment's cap.
    pub max_depth: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            num_pairs: 1000,
            ks: (1..=10).map(|i| i * 10).collect(),
            max_depth: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub mcts: MctsConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Output root for run directories.
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.env {
            EnvConfig::Toy {
                variant,
                grid_size,
                shape_count,
                cell_pixels,
            } => ToyConfig {
                grid_size: *grid_size,
                shape_count: *shape_count,
                variant: *variant,
                cell_pixels: *cell_pixels,
            }
            .validate()
            .map_err(ConfigError::Invalid)?,
            EnvConfig::Image {
                side,
                max_len,
                max_repeats,
                pool,
            } => {
                ImageEnvConfig {
                    side: *side,
                    max_len: *max_len,
                    max_repeats: *max_repeats,
                }
                .validate()
                .map_err(ConfigError::Invalid)?;
                if let PoolConfig::Procedural { count, .. } = pool {
                    if *count == 0 {
                        return Err(ConfigError::Invalid("procedural pool is empty".into()));
                    }
                }
            }
        }
        self.mcts.validate().map_err(ConfigError::Invalid)?;
        self.training.validate().map_err(ConfigError::Invalid)?;
        if self.eval.num_pairs == 0 || self.eval.ks.is_empty() {
            return Err(ConfigError::Invalid(
                "eval needs num_pairs >= 1 and a non-empty K list".into(),
            ));
        }
        if self.eval.ks.contains(&0) {
            return Err(ConfigError::Invalid("eval K values must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_env(&self) -> Result<BuiltEnv, ConfigError> {
        match &self.env {
            EnvConfig::Toy {
                variant,
                grid_size,
                shape_count,
                cell_pixels,
            } => {
                let env = ToyEnv::new(ToyConfig {
                    grid_size: *grid_size,
                    shape_count: *shape_count,
                    variant: *variant,
                    cell_pixels: *cell_pixels,
                })
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(BuiltEnv::Toy(env))
            }
            EnvConfig::Image {
                side,
                max_len,
                max_repeats,
                pool,
            } => {
                let cfg = ImageEnvConfig {
                    side: *side,
                    max_len: *max_len,
                    max_repeats: *max_repeats,
                };
                let env = match pool {
                    PoolConfig::Procedural { seed, count } => {
                        ImageEnv::with_procedural_pool(cfg, *seed, *count)
                    }
                    PoolConfig::Directory { dir } => {
                        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                            .filter_map(|e| e.ok().map(|e| e.path()))
                            .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
                            .collect();
                        paths.sort();
                        if paths.is_empty() {
                            return Err(ConfigError::Invalid(format!(
                                "no .pgm files in {}",
                                dir.display()
                            )));
                        }
                        let pool = paths
                            .iter()
                            .map(|p| pgm::read(p))
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                        ImageEnv::new(cfg, pool).map_err(|e| ConfigError::Invalid(e.to_string()))?
                    }
                };
                Ok(BuiltEnv::Image(env))
            }
        }
    }

    /// Network preset matching the environment's input geometry.
    pub fn network_config(&self, env: &dyn Environment, head: HeadKind) -> NetworkConfig {
        match &self.env {
            EnvConfig::Toy { .. } => NetworkConfig::toy(env.action_count(), env.side(), head),
            EnvConfig::Image { .. } => NetworkConfig::image(env.action_count(), env.side(), head),
        }
    }
}
