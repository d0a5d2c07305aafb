use nalgebra::{Point3, Vector3};

use super::{KdTree, KeyPoint, PointCloud};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PillarMember {
    /// Index of the point in its cloud.
    pub index: usize,
    pub position: Point3<f64>,
    pub intensity: f64,
    pub distance: f64,
}

/// A key-point with up to `capacity` neighbors; the remaining slots are zero-pads.
#[derive(Clone, Debug, PartialEq)]
pub struct Pillar {
    pub keypoint: KeyPoint,
    /// Mean of the real members, or the key-point position when there are none.
    pub centroid: Point3<f64>,
    /// Real members by ascending `(distance, index)`.
    pub members: Vec<PillarMember>,
    pub capacity: usize,
}

impl Pillar {
    pub fn real_count(&self) -> usize {
        self.members.len()
    }

    pub fn pad_count(&self) -> usize {
        self.capacity - self.members.len()
    }
}

/// The `z` nearest points strictly within `d` of the key-point.
pub fn sample_pillar(cloud: &PointCloud, tree: &KdTree, keypoint: &KeyPoint, z: usize, d: f64) -> Result<Pillar> {
    if z == 0 {
        return Err(Error::Argument("pillar capacity z must be at least 1".into()));
    }
    if !(d > 0.0) {
        return Err(Error::Argument(format!("pillar radius must be positive, got {d}")));
    }
    let members: Vec<PillarMember> = tree
        .knn(&keypoint.position, z)
        .into_iter()
        .filter(|n| n.distance < d)
        .map(|n| PillarMember {
            index: n.index,
            position: cloud.points()[n.index],
            intensity: cloud.intensities()[n.index],
            distance: n.distance,
        })
        .collect();
    let centroid = if members.is_empty() {
        keypoint.position
    } else {
        let sum: Vector3<f64> = members.iter().map(|m| m.position.coords).sum();
        Point3::from(sum / members.len() as f64)
    };
    Ok(Pillar {
        keypoint: *keypoint,
        centroid,
        members,
        capacity: z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::KeyPointKind;

    fn kp(p: [f64; 3]) -> KeyPoint {
        KeyPoint {
            index: 0,
            position: Point3::new(p[0], p[1], p[2]),
            smoothness: 0.0,
            kind: KeyPointKind::Planar,
        }
    }

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        let pts: Vec<_> = points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect();
        let n = pts.len();
        PointCloud::new(pts, (0..n).map(|i| i as f64 / 10.0).collect(), "t").unwrap()
    }

    #[test]
    fn few_points_are_padded() {
        let c = cloud(&[[1.0, 0.0, 0.0], [1.1, 0.0, 0.0], [1.0, 0.2, 0.0], [5.0, 0.0, 0.0]]);
        let tree = KdTree::new(c.points());
        let p = sample_pillar(&c, &tree, &kp([1.0, 0.0, 0.0]), 100, 0.5).unwrap();
        assert_eq!(p.real_count(), 3);
        assert_eq!(p.pad_count(), 97);
        assert_eq!(p.members.iter().map(|m| m.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn capacity_one_keeps_nearest() {
        let c = cloud(&[[0.2, 0.0, 0.0], [0.1, 0.0, 0.0]]);
        let tree = KdTree::new(c.points());
        let p = sample_pillar(&c, &tree, &kp([0.0, 0.0, 0.0]), 1, 0.5).unwrap();
        assert_eq!(p.members.len(), 1);
        assert_eq!(p.members[0].index, 1);
        assert!((p.centroid - Point3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn empty_pillar_centroid_is_keypoint() {
        let c = cloud(&[[3.0, 0.0, 0.0]]);
        let tree = KdTree::new(c.points());
        let p = sample_pillar(&c, &tree, &kp([0.0, 1.0, 0.0]), 4, 0.5).unwrap();
        assert_eq!(p.real_count(), 0);
        assert_eq!(p.centroid, Point3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn bad_arguments() {
        let c = cloud(&[[3.0, 0.0, 0.0]]);
        let tree = KdTree::new(c.points());
        assert!(sample_pillar(&c, &tree, &kp([0.0; 3]), 0, 0.5).is_err());
        assert!(sample_pillar(&c, &tree, &kp([0.0; 3]), 1, 0.0).is_err());
    }
}
