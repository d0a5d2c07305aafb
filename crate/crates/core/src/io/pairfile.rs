//! Preprocessed pair files.
//!
//! Layout: magic `PMPAIR\0\0`, version `1` (u32 LE), header length (u64 LE),
//! a JSON [`PairHeader`], then the source pillar stacks (`n x z*11` f32 LE,
//! row-major) followed by the target stacks (`m x z*11`). Key-point positions
//! travel in the header at full precision.

use std::path::Path;

use pillarmatch_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::container;
use crate::cloud::{CorrespondenceLabels, KeyPoint, PreparedCloud, PreparedPair};
use crate::learn::TrainingPair;
use crate::network::{build_feature_stack, PairInput, FEATURES_PER_POINT};
use crate::register::RigidTransform;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PMPAIR\0\0";
pub const PAIR_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairHeader {
    pub n: usize,
    pub m: usize,
    pub z: usize,
    pub d: f64,
    pub frame_distance: u32,
    /// Maps source coordinates into the target frame.
    pub gt_transform: RigidTransform,
    /// Where the pair came from, e.g. a generator seed or scan ids.
    pub origin: String,
    pub source_keypoints: Vec<KeyPoint>,
    pub target_keypoints: Vec<KeyPoint>,
    /// Real (non-pad) members per pillar.
    pub source_real_counts: Vec<usize>,
    pub target_real_counts: Vec<usize>,
    pub labels: CorrespondenceLabels,
}

/// A pair file in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub header: PairHeader,
    /// `n x z*11` and `m x z*11`.
    pub source_stacks: Tensor<f32>,
    pub target_stacks: Tensor<f32>,
}

fn stacks(cloud: &PreparedCloud, z: usize) -> Tensor<f32> {
    let data: Vec<f32> = cloud
        .pillars
        .iter()
        .flat_map(|p| build_feature_stack(p).values)
        .map(|v| v as f32)
        .collect();
    Tensor::matrix(cloud.pillars.len(), z * FEATURES_PER_POINT, data).expect("stack shape")
}

fn positions(kps: &[KeyPoint]) -> Tensor<f32> {
    let data = kps
        .iter()
        .flat_map(|k| [k.position.x as f32, k.position.y as f32, k.position.z as f32])
        .collect();
    Tensor::matrix(kps.len(), 3, data).expect("position shape")
}

impl PairRecord {
    pub fn from_prepared(p: &PreparedPair, z: usize, d: f64, origin: impl Into<String>) -> Self {
        let counts = |c: &PreparedCloud| c.pillars.iter().map(|p| p.real_count()).collect();
        PairRecord {
            header: PairHeader {
                n: p.source.keypoints.len(),
                m: p.target.keypoints.len(),
                z,
                d,
                frame_distance: p.frame_distance,
                gt_transform: p.gt_transform,
                origin: origin.into(),
                source_keypoints: p.source.keypoints.clone(),
                target_keypoints: p.target.keypoints.clone(),
                source_real_counts: counts(&p.source),
                target_real_counts: counts(&p.target),
                labels: p.labels.clone(),
            },
            source_stacks: stacks(&p.source, z),
            target_stacks: stacks(&p.target, z),
        }
    }

    pub fn input(&self) -> PairInput<f32> {
        PairInput {
            source_stacks: self.source_stacks.clone(),
            source_positions: positions(&self.header.source_keypoints),
            target_stacks: self.target_stacks.clone(),
            target_positions: positions(&self.header.target_keypoints),
        }
    }

    pub fn training_pair(&self) -> TrainingPair {
        TrainingPair {
            input: self.input(),
            labels: self.header.labels.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut payload = self.source_stacks.as_slice().to_vec();
        payload.extend_from_slice(self.target_stacks.as_slice());
        container::encode(MAGIC, PAIR_FORMAT_VERSION, &header, &payload)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(bytes, MAGIC, PAIR_FORMAT_VERSION, "pair")?;
        let header: PairHeader = serde_json::from_slice(header).map_err(container::json_error("pair"))?;
        let depth = header.z * FEATURES_PER_POINT;
        let consistent = header.source_keypoints.len() == header.n
            && header.target_keypoints.len() == header.m
            && header.source_real_counts.len() == header.n
            && header.target_real_counts.len() == header.m
            && header.labels.n == header.n
            && header.labels.m == header.m
            && payload.len() == (header.n + header.m) * depth;
        if !consistent {
            return Err(Error::Format("pair header does not match its payload".into()));
        }
        header.labels.validate()?;
        if !payload.iter().all(|v| v.is_finite()) {
            return Err(Error::Format("pair payload has non-finite values".into()));
        }
        let split = header.n * depth;
        Ok(PairRecord {
            source_stacks: Tensor::matrix(header.n, depth, payload[..split].to_vec())?,
            target_stacks: Tensor::matrix(header.m, depth, payload[split..].to_vec())?,
            header,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&container::read(path)?)
            .map_err(|e| match e {
                Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
                other => other,
            })
    }
}
