//! Point clouds, key-points, pillars and ground-truth labels.

mod keypoints;
pub mod kdtree;
pub mod kitti;
mod labels;
mod pillar;
mod prepare;
pub mod synth;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

pub use kdtree::{KdTree, Neighbor};
pub use keypoints::{
    rank_select, select_keypoints, select_keypoints_with_tree, smoothness, smoothness_of,
    smoothness_with_tree, KeypointConfig, DEFAULT_NEIGHBORHOOD, EPS_ORIGIN,
};
pub use labels::{label_correspondences, label_points, CorrespondenceLabels, LabelRadii};
pub use pillar::{sample_pillar, Pillar, PillarMember};
pub use prepare::{prepare_pair, PrepareConfig, PreparedCloud, PreparedPair};
pub use synth::{generate_synthetic_pair, SceneConfig};

use crate::register::RigidTransform;
use crate::{Error, Result};

/// Ordered 3-D points with per-point intensity.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    intensities: Vec<f64>,
    frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>, intensities: Vec<f64>, frame_id: impl Into<String>) -> Result<Self> {
        if points.len() != intensities.len() {
            return Err(Error::Argument(format!(
                "{} points but {} intensities",
                points.len(),
                intensities.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::Argument(format!("point {i} has non-finite coordinates")));
        }
        if let Some(i) = intensities.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("intensity {i} is not finite")));
        }
        Ok(PointCloud {
            points,
            intensities,
            frame_id: frame_id.into(),
        })
    }

    pub fn empty(frame_id: impl Into<String>) -> Self {
        PointCloud {
            points: Vec::new(),
            intensities: Vec::new(),
            frame_id: frame_id.into(),
        }
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The cloud with every point mapped through `t`.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: t.apply_all(&self.points),
            intensities: self.intensities.clone(),
            frame_id: self.frame_id.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyPointKind {
    Sharp,
    Planar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyPoint {
    /// Index of the point in its cloud.
    pub index: usize,
    pub position: Point3<f64>,
    pub smoothness: f64,
    pub kind: KeyPointKind,
}

/// Two scans with the rigid motion mapping source coordinates into the target frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePair {
    pub source: PointCloud,
    pub target: PointCloud,
    pub gt_transform: RigidTransform,
    pub frame_distance: u32,
}

impl FramePair {
    pub fn new(source: PointCloud, target: PointCloud, gt_transform: RigidTransform, frame_distance: u32) -> Result<Self> {
        gt_transform.validate()?;
        Ok(FramePair {
            source,
            target,
            gt_transform,
            frame_distance,
        })
    }
}
