//! Settings from flags merged over an optional TOML file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use irlplan::evaluation::Thresholds;
use irlplan::prediction::{CmpTrainConfig, IdmParams};
use irlplan::{FeatureConfig, IrlTrainConfig};

use crate::args::{FusionKind, PredictorKind};
use crate::error::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub loss_csv: Option<PathBuf>,
    pub predictor: Option<PredictorKind>,
    pub fusion: Option<FusionKind>,
    pub params: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub seed: Option<u64>,
    pub template: Option<String>,
    pub count: Option<usize>,
    pub batch: Option<bool>,
    pub embed_dim: Option<usize>,
    pub num_modes: Option<usize>,
    pub max_agents: Option<usize>,
    pub cmp_train: Option<CmpTrainConfig>,
    pub irl_train: Option<IrlTrainConfig>,
    pub features: Option<FeatureConfig>,
    pub thresholds: Option<Thresholds>,
    pub idm: Option<IdmParams>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    /// Flag value, else the file value, else a usage error naming the flag.
    pub fn required<T: Clone>(flag: &Option<T>, file: &Option<T>, name: &str) -> Result<T, Failure> {
        flag.clone()
            .or_else(|| file.clone())
            .ok_or_else(|| Failure::usage(format!("missing --{name}")))
    }
}

pub fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}
