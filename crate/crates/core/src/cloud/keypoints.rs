use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{KdTree, KeyPoint, KeyPointKind, PointCloud};
use crate::{Error, Result};

/// Points closer than this to the sensor origin have no smoothness value.
pub const EPS_ORIGIN: f64 = 1e-6;
pub const DEFAULT_NEIGHBORHOOD: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeypointConfig {
    /// Number of nearest neighbors forming the smoothness neighborhood.
    pub neighborhood_size: usize,
    /// Minimum distance between selected key-points; `None` disables it.
    pub min_separation: Option<f64>,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        KeypointConfig {
            neighborhood_size: DEFAULT_NEIGHBORHOOD,
            min_separation: None,
        }
    }
}

/// `|sum_{k'} (x_k - x_k')| / (|S| |x_k|)` for an explicit neighborhood.
pub fn smoothness_of(index: usize, x: &Point3<f64>, neighbors: &[Point3<f64>]) -> Result<f64> {
    let norm = x.coords.norm();
    if norm <= EPS_ORIGIN {
        return Err(Error::DegeneratePoint {
            index,
            epsilon: EPS_ORIGIN,
        });
    }
    if neighbors.is_empty() {
        return Err(Error::Argument("smoothness needs a nonempty neighborhood".into()));
    }
    let sum: Vector3<f64> = neighbors.iter().map(|n| x - n).sum();
    Ok(sum.norm() / (neighbors.len() as f64 * norm))
}

/// Smoothness of point `k` using a prebuilt tree over `cloud`.
pub fn smoothness_with_tree(cloud: &PointCloud, tree: &KdTree, k: usize, neighborhood_size: usize) -> Result<f64> {
    if cloud.len() <= neighborhood_size {
        return Err(Error::InsufficientPoints {
            needed: neighborhood_size + 1,
            available: cloud.len(),
        });
    }
    let x = cloud.points().get(k).ok_or_else(|| {
        Error::Argument(format!("point index {k} out of range for {} points", cloud.len()))
    })?;
    if x.coords.norm() <= EPS_ORIGIN {
        return Err(Error::DegeneratePoint {
            index: k,
            epsilon: EPS_ORIGIN,
        });
    }
    let neighbors: Vec<Point3<f64>> = tree
        .knn(x, neighborhood_size + 1)
        .into_iter()
        .filter(|n| n.index != k)
        .take(neighborhood_size)
        .map(|n| cloud.points()[n.index])
        .collect();
    smoothness_of(k, x, &neighbors)
}

pub fn smoothness(cloud: &PointCloud, k: usize, neighborhood_size: usize) -> Result<f64> {
    smoothness_with_tree(cloud, &KdTree::new(cloud.points()), k, neighborhood_size)
}

/// Picks `ceil(n/2)` highest-smoothness candidates as sharp and `floor(n/2)`
/// lowest as planar. Ties go to the smaller index. With `separation`, a
/// candidate closer than the radius to any accepted key-point is skipped.
///
/// `candidates` holds `(point index, smoothness)`; returns
/// `(point index, smoothness, kind)` with sharp first (descending) then
/// planar (ascending).
pub fn rank_select(
    candidates: &[(usize, f64)],
    n: usize,
    separation: Option<(f64, &[Point3<f64>])>,
) -> Result<Vec<(usize, f64, KeyPointKind)>> {
    if candidates.len() < n {
        return Err(Error::InsufficientPoints {
            needed: n,
            available: candidates.len(),
        });
    }
    let mut desc: Vec<(usize, f64)> = candidates.to_vec();
    desc.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut asc = desc.clone();
    asc.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let n_sharp = n.div_ceil(2);
    let n_planar = n / 2;
    let mut chosen: Vec<(usize, f64, KeyPointKind)> = Vec::with_capacity(n);
    let mut used = std::collections::HashSet::new();
    let admissible = |chosen: &[(usize, f64, KeyPointKind)], idx: usize| match separation {
        None => true,
        Some((r, pts)) => chosen
            .iter()
            .all(|&(j, _, _)| (pts[idx] - pts[j]).norm() >= r),
    };
    for (list, count, kind) in [
        (&desc, n_sharp, KeyPointKind::Sharp),
        (&asc, n_planar, KeyPointKind::Planar),
    ] {
        let mut taken = 0;
        for &(idx, c) in list.iter() {
            if taken == count {
                break;
            }
            if used.contains(&idx) || !admissible(&chosen, idx) {
                continue;
            }
            used.insert(idx);
            chosen.push((idx, c, kind));
            taken += 1;
        }
        if taken < count {
            return Err(Error::InsufficientPoints {
                needed: n,
                available: chosen.len(),
            });
        }
    }
    Ok(chosen)
}

pub fn select_keypoints_with_tree(cloud: &PointCloud, tree: &KdTree, n: usize, config: &KeypointConfig) -> Result<Vec<KeyPoint>> {
    if cloud.len() <= config.neighborhood_size {
        return Err(Error::InsufficientPoints {
            needed: n.max(config.neighborhood_size + 1),
            available: cloud.len(),
        });
    }
    let mut candidates = Vec::with_capacity(cloud.len());
    for k in 0..cloud.len() {
        match smoothness_with_tree(cloud, tree, k, config.neighborhood_size) {
            Ok(c) => candidates.push((k, c)),
            Err(Error::DegeneratePoint { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let separation = config.min_separation.map(|r| (r, cloud.points()));
    Ok(rank_select(&candidates, n, separation)?
        .into_iter()
        .map(|(index, smoothness, kind)| KeyPoint {
            index,
            position: cloud.points()[index],
            smoothness,
            kind,
        })
        .collect())
}

pub fn select_keypoints(cloud: &PointCloud, n: usize, config: &KeypointConfig) -> Result<Vec<KeyPoint>> {
    select_keypoints_with_tree(cloud, &KdTree::new(cloud.points()), n, config)
}
