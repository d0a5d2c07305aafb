//! Model checkpoints.
//!
//! Layout: magic `PMCKPT\0\0`, version `1` (u32 LE), manifest length (u64 LE),
//! a JSON [`CheckpointManifest`], then f32 LE values at the offsets listed in
//! the manifest (counted in values, not bytes).

use std::collections::BTreeMap;
use std::path::Path;

use pillarmatch_autodiff::{RunningStats, Tensor};
use serde::{Deserialize, Serialize};

use super::container;
use crate::learn::{Adam, AdamConfig, EpochRecord, TrainConfig, TrainState};
use crate::network::{ModelConfig, ModelParameters};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PMCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEntry {
    pub name: String,
    pub channels: usize,
    pub momentum: f64,
    /// Running mean at `offset`, running variance right after it.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerEntry {
    pub config: AdamConfig,
    pub step: u64,
    /// First moments of all tensors in order, then second moments.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub epoch: usize,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    /// Hyperparameters and every architecture switch.
    pub model: ModelConfig,
    /// Interpretive choices the weights were trained under.
    pub conventions: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
    pub norms: Vec<NormEntry>,
    pub optimizer: Option<OptimizerEntry>,
    pub progress: Option<TrainProgress>,
}

pub fn conventions() -> BTreeMap<String, String> {
    [
        ("loss_form", "log-domain cross-entropy: -score_true + log-sum-exp; NLLP penalty log-sum over the whole row including the dustbin"),
        ("accuracy", "correct ground-truth cells (matches and dustbin assignments) / all ground-truth cells"),
        ("precision", "correct predicted pairs / predicted pairs, excluding pairs whose row and column are both ignored"),
        ("match_readout", "mutual argmax over rows and columns including dustbins, then confidence threshold"),
        ("position_encoder", "hidden layers linear-batchnorm-relu at position_widths, then a linear output of width feature_depth"),
        ("batch_norm", "statistics pooled over all pillars of both scans of every pair in the batch"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParameters<f32>,
    pub optimizer: Option<Adam<f32>>,
    pub progress: Option<TrainProgress>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, config: &TrainConfig) -> Self {
        Checkpoint {
            model: state.model.clone(),
            optimizer: Some(state.optimizer.clone()),
            progress: Some(TrainProgress {
                epoch: state.epoch,
                config: config.clone(),
                history: state.history.clone(),
            }),
        }
    }

    /// Training state to resume from; fresh optimizer if none was stored.
    pub fn into_state(self, adam: AdamConfig) -> TrainState {
        let optimizer = self
            .optimizer
            .unwrap_or_else(|| Adam::new(adam, self.model.tensors()));
        let (epoch, history) = self.progress.map_or((0, Vec::new()), |p| (p.epoch, p.history));
        TrainState {
            model: self.model,
            optimizer,
            epoch,
            history,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut payload: Vec<f32> = Vec::new();
        let model = &self.model;
        let tensors = model
            .names()
            .iter()
            .zip(model.tensors())
            .map(|(name, t)| {
                let offset = payload.len();
                payload.extend_from_slice(t.as_slice());
                TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset }
            })
            .collect();
        let norms = model
            .norm_names()
            .iter()
            .zip(model.norm_stats())
            .map(|(name, s)| {
                let offset = payload.len();
                payload.extend_from_slice(&s.mean);
                payload.extend_from_slice(&s.var);
                NormEntry { name: name.clone(), channels: s.channels(), momentum: s.momentum as f64, offset }
            })
            .collect();
        let optimizer = self.optimizer.as_ref().map(|o| {
            let offset = payload.len();
            for t in o.m.iter().chain(&o.v) {
                payload.extend_from_slice(t.as_slice());
            }
            OptimizerEntry { config: o.config, step: o.step, offset }
        });
        let manifest = CheckpointManifest {
            model: model.config().clone(),
            conventions: conventions(),
            tensors,
            norms,
            optimizer,
            progress: self.progress.clone(),
        };
        let header = serde_json::to_vec(&manifest).expect("manifest serializes");
        container::encode(MAGIC, CHECKPOINT_VERSION, &header, &payload)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(bytes, MAGIC, CHECKPOINT_VERSION, "checkpoint")?;
        let manifest: CheckpointManifest = serde_json::from_slice(header).map_err(container::json_error("checkpoint"))?;
        let slice = |offset: usize, len: usize| -> Result<Vec<f32>> {
            payload
                .get(offset..offset + len)
                .map(<[f32]>::to_vec)
                .ok_or_else(|| Error::Format("checkpoint payload is truncated".into()))
        };
        let tensors = manifest
            .tensors
            .iter()
            .map(|e| {
                let len = e.shape.iter().product();
                Ok((e.name.clone(), Tensor::new(e.shape.clone(), slice(e.offset, len)?)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let norms = manifest
            .norms
            .iter()
            .map(|e| {
                Ok((
                    e.name.clone(),
                    RunningStats {
                        mean: slice(e.offset, e.channels)?,
                        var: slice(e.offset + e.channels, e.channels)?,
                        momentum: e.momentum as f32,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = ModelParameters::from_parts(&manifest.model, tensors, norms)?;
        let optimizer = match &manifest.optimizer {
            None => None,
            Some(o) => {
                let mut offset = o.offset;
                let mut read = |shape: &[usize]| -> Result<Tensor<f32>> {
                    let len = shape.iter().product();
                    let t = Tensor::new(shape.to_vec(), slice(offset, len)?)?;
                    offset += len;
                    Ok(t)
                };
                let shapes: Vec<Vec<usize>> = model.tensors().iter().map(|t| t.shape().to_vec()).collect();
                let m = shapes.iter().map(|s| read(s)).collect::<Result<Vec<_>>>()?;
                let v = shapes.iter().map(|s| read(s)).collect::<Result<Vec<_>>>()?;
                Some(Adam { config: o.config, step: o.step, m, v })
            }
        };
        if !model.tensors().iter().all(Tensor::all_finite) {
            return Err(Error::Format("checkpoint holds non-finite weights".into()));
        }
        Ok(Checkpoint {
            model,
            optimizer,
            progress: manifest.progress,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&container::read(path)?)
    }
}
