use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{estimate_transform_svd, RigidTransform};
use crate::cloud::KdTree;
use crate::transport::{Match, MatchSet};
use crate::{Error, Result};

/// Mutual nearest neighbors on raw coordinates; ties go to the smaller index.
pub fn nn_matcher(src: &[Point3<f64>], tgt: &[Point3<f64>]) -> MatchSet {
    if src.is_empty() || tgt.is_empty() {
        return MatchSet::from_pairs(src.len(), tgt.len(), Vec::new());
    }
    let tgt_tree = KdTree::new(tgt);
    let src_tree = KdTree::new(src);
    let pairs = src
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let j = tgt_tree.nearest(p)?.index;
            (src_tree.nearest(&tgt[j])?.index == i).then_some(Match { i, j, confidence: 1.0 })
        })
        .collect();
    MatchSet::from_pairs(src.len(), tgt.len(), pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop once the residual changes by less than this.
    pub tol: f64,
    /// Correspondences at or beyond this distance are discarded; `None` keeps all.
    pub rejection: Option<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iters: 50,
            tol: 1e-9,
            rejection: Some(2.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Residual before the first iteration, then after each iteration.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean of `min(d^2, r^2)` over all source points, `d` the distance of the
/// moved point to its nearest target point.
fn truncated_residual(src: &[Point3<f64>], tree: &KdTree, t: &RigidTransform, cap2: f64) -> f64 {
    let sum: f64 = src
        .iter()
        .map(|p| {
            let d = tree.nearest(&t.apply(p)).map_or(f64::INFINITY, |n| n.distance);
            (d * d).min(cap2)
        })
        .sum();
    sum / src.len() as f64
}

/// Point-to-point ICP starting from `init`.
///
/// The objective is the truncated squared distance, which cannot increase
/// between iterations when correspondences are rejected at the same radius.
pub fn icp(src: &[Point3<f64>], tgt: &[Point3<f64>], init: &RigidTransform, config: &IcpConfig) -> Result<IcpResult> {
    if config.max_iters == 0 {
        return Err(Error::Argument("ICP needs at least one iteration".into()));
    }
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::DegenerateGeometry("ICP on an empty point set".into()));
    }
    let tree = KdTree::new(tgt);
    let cap = config.rejection.unwrap_or(f64::INFINITY);
    let cap2 = cap * cap;
    let mut t = *init;
    let mut residuals = vec![truncated_residual(src, &tree, &t, cap2)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let (mut s, mut q) = (Vec::new(), Vec::new());
        for p in src {
            if let Some(nb) = tree.nearest(&t.apply(p)) {
                if nb.distance < cap {
                    s.push(*p);
                    q.push(tgt[nb.index]);
                }
            }
        }
        let next = match estimate_transform_svd(&s, &q) {
            Ok(next) => next,
            Err(Error::InsufficientCorrespondences(k)) => {
                return Err(Error::DegenerateGeometry(format!(
                    "only {k} ICP correspondences within {cap} m"
                )))
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        let res = truncated_residual(src, &tree, &next, cap2);
        let prev = *residuals.last().unwrap();
        residuals.push(res);
        t = next;
        if (prev - res).abs() < config.tol {
            converged = true;
            break;
        }
    }
    Ok(IcpResult {
        transform: t,
        residuals,
        iterations,
        converged,
    })
}
