use serde::{Deserialize, Serialize};

use super::{
    label_correspondences, sample_pillar, select_keypoints_with_tree, CorrespondenceLabels, FramePair, KdTree,
    KeyPoint, KeypointConfig, LabelRadii, Pillar, PointCloud,
};
use crate::register::RigidTransform;
use crate::Result;

/// Per-frame preprocessing parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    /// Key-points in the source scan.
    pub n: usize,
    /// Key-points in the target scan.
    pub m: usize,
    /// Pillar capacity.
    pub z: usize,
    /// Pillar radius (meters).
    pub d: f64,
    pub keypoints: KeypointConfig,
    pub radii: LabelRadii,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            n: 100,
            m: 100,
            z: 100,
            d: 0.5,
            keypoints: KeypointConfig::default(),
            radii: LabelRadii::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedCloud {
    pub keypoints: Vec<KeyPoint>,
    pub pillars: Vec<Pillar>,
}

/// Key-points, pillars and labels of one frame pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPair {
    pub source: PreparedCloud,
    pub target: PreparedCloud,
    pub labels: CorrespondenceLabels,
    pub gt_transform: RigidTransform,
    pub frame_distance: u32,
}

fn prepare_cloud(cloud: &PointCloud, count: usize, config: &PrepareConfig) -> Result<PreparedCloud> {
    let tree = KdTree::new(cloud.points());
    let keypoints = select_keypoints_with_tree(cloud, &tree, count, &config.keypoints)?;
    let pillars = keypoints
        .iter()
        .map(|kp| sample_pillar(cloud, &tree, kp, config.z, config.d))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedCloud { keypoints, pillars })
}

pub fn prepare_pair(pair: &FramePair, config: &PrepareConfig) -> Result<PreparedPair> {
    let source = prepare_cloud(&pair.source, config.n, config)?;
    let target = prepare_cloud(&pair.target, config.m, config)?;
    let labels = label_correspondences(&pair.gt_transform, &source.keypoints, &target.keypoints, &config.radii)?;
    Ok(PreparedPair {
        source,
        target,
        labels,
        gt_transform: pair.gt_transform,
        frame_distance: pair.frame_distance,
    })
}
