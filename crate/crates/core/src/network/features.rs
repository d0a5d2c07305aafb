use nalgebra::Point3;

use crate::cloud::Pillar;

/// Values per pillar row: position (3), intensity, offset to centroid (3),
/// range, offset to key-point (3).
pub const FEATURES_PER_POINT: usize = 11;

/// Flattened `z x 11` feature rows of one pillar, point-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PillarFeatureStack {
    pub z: usize,
    pub values: Vec<f64>,
}

pub fn feature_row(position: &Point3<f64>, intensity: f64, centroid: &Point3<f64>, keypoint: &Point3<f64>) -> [f64; FEATURES_PER_POINT] {
    let c = position - centroid;
    let k = position - keypoint;
    [
        position.x,
        position.y,
        position.z,
        intensity,
        c.x,
        c.y,
        c.z,
        position.coords.norm(),
        k.x,
        k.y,
        k.z,
    ]
}

pub fn build_feature_stack(pillar: &Pillar) -> PillarFeatureStack {
    let mut values = vec![0.0; pillar.capacity * FEATURES_PER_POINT];
    for (row, m) in values.chunks_exact_mut(FEATURES_PER_POINT).zip(&pillar.members) {
        row.copy_from_slice(&feature_row(&m.position, m.intensity, &pillar.centroid, &pillar.keypoint.position));
    }
    PillarFeatureStack { z: pillar.capacity, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{KeyPoint, KeyPointKind, PillarMember};

    fn pillar(kp: [f64; 3], members: &[([f64; 3], f64)], z: usize) -> Pillar {
        let keypoint = KeyPoint {
            index: 0,
            position: Point3::new(kp[0], kp[1], kp[2]),
            smoothness: 0.0,
            kind: KeyPointKind::Sharp,
        };
        let members: Vec<PillarMember> = members
            .iter()
            .enumerate()
            .map(|(index, (p, i))| {
                let position = Point3::new(p[0], p[1], p[2]);
                PillarMember { index, position, intensity: *i, distance: (position - keypoint.position).norm() }
            })
            .collect();
        let centroid = if members.is_empty() {
            keypoint.position
        } else {
            Point3::from(members.iter().map(|m| m.position.coords).sum::<nalgebra::Vector3<f64>>() / members.len() as f64)
        };
        Pillar { keypoint, centroid, members, capacity: z }
    }

    #[test]
    fn single_member_at_keypoint() {
        let s = build_feature_stack(&pillar([3.0, 4.0, 0.0], &[([3.0, 4.0, 0.0], 0.5)], 2));
        assert_eq!(s.values.len(), 22);
        assert_eq!(&s.values[..11], &[3.0, 4.0, 0.0, 0.5, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0]);
        assert!(s.values[11..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_pad_pillar_is_zero() {
        let s = build_feature_stack(&pillar([1.0, 2.0, 3.0], &[], 3));
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centroid_offsets() {
        let s = build_feature_stack(&pillar([0.0; 3], &[([1.0, 0.0, 0.0], 0.0), ([0.0, 1.0, 0.0], 0.0)], 2));
        assert_eq!(&s.values[4..7], &[0.5, -0.5, 0.0]);
        assert_eq!(&s.values[15..18], &[-0.5, 0.5, 0.0]);
        assert_eq!(&s.values[8..11], &[1.0, 0.0, 0.0]);
    }
}
