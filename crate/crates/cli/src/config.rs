//! Run configuration: one TOML file covering every command.

use std::path::{Path, PathBuf};

use pillarmatch::cloud::{PrepareConfig, SceneConfig};
use pillarmatch::eval::EvalConfig;
use pillarmatch::learn::TrainConfig;
use pillarmatch::network::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub count: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { count: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KittiSection {
    pub root: Option<PathBuf>,
    /// Sequences written with split `train`.
    pub train_sequences: Vec<String>,
    /// Sequences written with split `val`.
    pub val_sequences: Vec<String>,
    pub frame_distances: Vec<u32>,
}

impl Default for KittiSection {
    fn default() -> Self {
        KittiSection {
            root: None,
            train_sequences: Vec::new(),
            val_sequences: Vec::new(),
            frame_distances: vec![1, 5, 10],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSection {
    /// Forward passes averaged by `match`.
    pub runs: usize,
}

impl Default for TimingSection {
    fn default() -> Self {
        TimingSection { runs: 10 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds synthetic data and model initialization.
    pub seed: u64,
    pub scene: SceneConfig,
    pub prepare: PrepareConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SynthSection,
    pub kitti: KittiSection,
    pub timing: TimingSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the effective configuration as `config.toml` into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<(), Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()).map_err(|e| Failure::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 7\n[train]\nloss = \"dce\"\n[model.hyper]\nheads = 4\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.loss.name(), "dce");
        assert_eq!(cfg.model.hyper.heads, 4);
        assert_eq!(cfg.model.hyper.feature_depth, 32);
        assert_eq!(cfg.train.adam.lr, 1e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 1\n").is_err());
    }
}
