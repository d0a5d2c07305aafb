use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::KeyPoint;
use crate::register::RigidTransform;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelRadii {
    /// Mutual nearest neighbors closer than this are matched.
    pub match_radius: f64,
    /// Key-points whose nearest counterpart is farther than this go to the dustbin.
    pub unmatch_radius: f64,
}

impl Default for LabelRadii {
    fn default() -> Self {
        LabelRadii {
            match_radius: 0.1,
            unmatch_radius: 0.5,
        }
    }
}

/// Ground-truth assignment for an `n x m` key-point pair.
///
/// Row `n` and column `m` of the augmented matrix are the dustbins.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondenceLabels {
    pub n: usize,
    pub m: usize,
    /// One-to-one pairs sorted by row.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    pub ignored_rows: Vec<usize>,
    pub ignored_cols: Vec<usize>,
}

impl CorrespondenceLabels {
    /// All ground-truth cells of the augmented matrix: matched pairs, then
    /// `(i, m)` for unmatched rows, then `(n, j)` for unmatched columns.
    pub fn gt_cells(&self) -> Vec<(usize, usize)> {
        let mut cells = self.matched.clone();
        cells.extend(self.unmatched_rows.iter().map(|&i| (i, self.m)));
        cells.extend(self.unmatched_cols.iter().map(|&j| (self.n, j)));
        cells
    }

    pub fn gt_count(&self) -> usize {
        self.matched.len() + self.unmatched_rows.len() + self.unmatched_cols.len()
    }

    /// Checks index ranges, disjointness and one-to-one matching.
    pub fn validate(&self) -> Result<()> {
        let mut rows = vec![false; self.n];
        let mut cols = vec![false; self.m];
        let mark = |seen: &mut Vec<bool>, i: usize, what: &str| -> Result<()> {
            match seen.get_mut(i) {
                None => Err(Error::Format(format!("{what} index {i} out of range"))),
                Some(true) => Err(Error::Format(format!("{what} index {i} labeled twice"))),
                Some(s) => {
                    *s = true;
                    Ok(())
                }
            }
        };
        for &(i, j) in &self.matched {
            mark(&mut rows, i, "row")?;
            mark(&mut cols, j, "column")?;
        }
        for &i in self.unmatched_rows.iter().chain(&self.ignored_rows) {
            mark(&mut rows, i, "row")?;
        }
        for &j in self.unmatched_cols.iter().chain(&self.ignored_cols) {
            mark(&mut cols, j, "column")?;
        }
        Ok(())
    }

    pub fn is_row_ignored(&self, i: usize) -> bool {
        self.ignored_rows.contains(&i)
    }

    pub fn is_col_ignored(&self, j: usize) -> bool {
        self.ignored_cols.contains(&j)
    }
}

fn nearest(q: &Point3<f64>, set: &[Point3<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in set.iter().enumerate() {
        let d = (p - q).norm();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best
}

/// Labels raw positions: `src` in the source frame, `tgt` in the target frame.
pub fn label_points(gt_transform: &RigidTransform, src: &[Point3<f64>], tgt: &[Point3<f64>], radii: &LabelRadii) -> Result<CorrespondenceLabels> {
    gt_transform.validate()?;
    if !(radii.match_radius > 0.0 && radii.match_radius < radii.unmatch_radius) {
        return Err(Error::Argument(format!(
            "need 0 < match radius < unmatch radius, got {} and {}",
            radii.match_radius, radii.unmatch_radius
        )));
    }
    let moved = gt_transform.apply_all(src);
    let row_nn: Vec<Option<(usize, f64)>> = moved.iter().map(|p| nearest(p, tgt)).collect();
    let col_nn: Vec<Option<(usize, f64)>> = tgt.iter().map(|p| nearest(p, &moved)).collect();

    let mut labels = CorrespondenceLabels {
        n: src.len(),
        m: tgt.len(),
        ..Default::default()
    };
    let mut col_matched = vec![false; tgt.len()];
    for (i, nn) in row_nn.iter().enumerate() {
        match *nn {
            Some((j, d)) if d < radii.match_radius && col_nn[j].map(|c| c.0) == Some(i) => {
                labels.matched.push((i, j));
                col_matched[j] = true;
            }
            Some((_, d)) if d <= radii.unmatch_radius => labels.ignored_rows.push(i),
            _ => labels.unmatched_rows.push(i),
        }
    }
    for (j, nn) in col_nn.iter().enumerate() {
        if col_matched[j] {
            continue;
        }
        match *nn {
            Some((_, d)) if d <= radii.unmatch_radius => labels.ignored_cols.push(j),
            _ => labels.unmatched_cols.push(j),
        }
    }
    Ok(labels)
}

pub fn label_correspondences(gt_transform: &RigidTransform, src: &[KeyPoint], tgt: &[KeyPoint], radii: &LabelRadii) -> Result<CorrespondenceLabels> {
    let s: Vec<Point3<f64>> = src.iter().map(|k| k.position).collect();
    let t: Vec<Point3<f64>> = tgt.iter().map(|k| k.position).collect();
    label_points(gt_transform, &s, &t, radii)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector3};

    fn pts(v: &[[f64; 3]]) -> Vec<Point3<f64>> {
        v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
    }

    #[test]
    fn identical_sets_match_themselves() {
        let p = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        let l = label_points(&RigidTransform::identity(), &p, &p, &LabelRadii::default()).unwrap();
        assert_eq!(l.matched, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(l.gt_count(), 3);
        l.validate().unwrap();
    }

    #[test]
    fn intermediate_distance_is_ignored_and_far_is_unmatched() {
        let src = pts(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [20.0, 0.0, 0.0]]);
        let tgt = pts(&[[0.0, 0.0, 0.0], [10.3, 0.0, 0.0], [22.0, 0.0, 0.0]]);
        let l = label_points(&RigidTransform::identity(), &src, &tgt, &LabelRadii::default()).unwrap();
        assert_eq!(l.matched, vec![(0, 0)]);
        assert_eq!(l.ignored_rows, vec![1]);
        assert_eq!(l.unmatched_rows, vec![2]);
        assert_eq!(l.ignored_cols, vec![1]);
        assert_eq!(l.unmatched_cols, vec![2]);
        assert_eq!(l.gt_cells(), vec![(0, 0), (2, 3), (3, 2)]);
    }

    #[test]
    fn transform_is_applied_to_source() {
        let src = pts(&[[1.0, 0.0, 0.0]]);
        let tgt = pts(&[[6.0, 0.0, 0.0]]);
        let t = RigidTransform::from_translation(Vector3::new(5.0, 0.0, 0.0));
        let l = label_points(&t, &src, &tgt, &LabelRadii::default()).unwrap();
        assert_eq!(l.matched, vec![(0, 0)]);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let p = pts(&[[0.0, 0.0, 0.0]]);
        let mut m = Matrix4::identity();
        m[(0, 0)] = 2.0;
        let bad = RigidTransform::from_matrix_unchecked(m);
        assert!(matches!(label_points(&bad, &p, &p, &LabelRadii::default()), Err(Error::Argument(_))));
        let radii = LabelRadii { match_radius: 0.5, unmatch_radius: 0.1 };
        assert!(label_points(&RigidTransform::identity(), &p, &p, &radii).is_err());
    }

    #[test]
    fn duplicate_labels_fail_validation() {
        let l = CorrespondenceLabels {
            n: 2,
            m: 2,
            matched: vec![(0, 0)],
            unmatched_rows: vec![0],
            ..Default::default()
        };
        assert!(l.validate().is_err());
    }
}
