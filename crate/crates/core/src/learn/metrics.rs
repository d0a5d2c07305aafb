use serde::{Deserialize, Serialize};

use crate::cloud::CorrespondenceLabels;
use crate::transport::MatchSet;

/// Counts behind precision and accuracy of predicted matches against labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    /// Predicted pairs that can be judged (not both endpoints ignored).
    pub predicted: usize,
    /// Predicted pairs that are ground-truth matches.
    pub correct: usize,
    /// Ground-truth cells, dustbin cells included.
    pub gt_cells: usize,
    /// Ground-truth cells reproduced by the prediction.
    pub correct_cells: usize,
}

impl MatchCounts {
    /// `correct / predicted`; 0 without predictions.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.correct as f64 / self.predicted as f64
        }
    }

    /// `correct_cells / gt_cells`; 0 without ground truth.
    pub fn accuracy(&self) -> f64 {
        if self.gt_cells == 0 {
            0.0
        } else {
            self.correct_cells as f64 / self.gt_cells as f64
        }
    }
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.predicted += o.predicted;
        self.correct += o.correct;
        self.gt_cells += o.gt_cells;
        self.correct_cells += o.correct_cells;
    }
}

/// Scores a prediction. A predicted pair whose row and column are both
/// ignored has no ground truth and is left out of the precision.
pub fn match_counts(pred: &MatchSet, labels: &CorrespondenceLabels) -> MatchCounts {
    let mut c = MatchCounts {
        gt_cells: labels.gt_count(),
        ..Default::default()
    };
    for p in &pred.pairs {
        let hit = labels.matched.contains(&(p.i, p.j));
        if !hit && labels.is_row_ignored(p.i) && labels.is_col_ignored(p.j) {
            continue;
        }
        c.predicted += 1;
        if hit {
            c.correct += 1;
        }
    }
    c.correct_cells = c.correct
        + labels.unmatched_rows.iter().filter(|i| pred.unmatched_rows.contains(i)).count()
        + labels.unmatched_cols.iter().filter(|j| pred.unmatched_cols.contains(j)).count();
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Match;

    fn labels() -> CorrespondenceLabels {
        CorrespondenceLabels {
            n: 4,
            m: 4,
            matched: vec![(0, 0), (1, 1)],
            unmatched_rows: vec![2],
            unmatched_cols: vec![2],
            ignored_rows: vec![3],
            ignored_cols: vec![3],
        }
    }

    fn mk(pairs: &[(usize, usize)]) -> MatchSet {
        MatchSet::from_pairs(4, 4, pairs.iter().map(|&(i, j)| Match { i, j, confidence: 1.0 }).collect())
    }

    #[test]
    fn perfect_prediction() {
        let c = match_counts(&mk(&[(0, 0), (1, 1)]), &labels());
        assert_eq!(c.precision(), 1.0);
        assert_eq!(c.accuracy(), 1.0);
    }

    #[test]
    fn wrong_and_unjudgeable_pairs() {
        let c = match_counts(&mk(&[(0, 1), (3, 3), (2, 2)]), &labels());
        assert_eq!(c.predicted, 2);
        assert_eq!(c.correct, 0);
        assert_eq!(c.gt_cells, 4);
        assert_eq!(c.correct_cells, 0);
    }

    #[test]
    fn empty_prediction_gets_dustbins_right() {
        let c = match_counts(&mk(&[]), &labels());
        assert_eq!(c.precision(), 0.0);
        assert_eq!(c.accuracy(), 0.5);
    }
}
