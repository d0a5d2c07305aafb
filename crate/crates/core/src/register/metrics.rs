use super::RigidTransform;
use crate::cloud::CorrespondenceLabels;
use crate::transport::MatchSet;
use crate::Result;

/// Translational and rotational error of `pred` against `gt`, computed on
/// `pred^-1 * gt`.
pub fn transform_errors(pred: &RigidTransform, gt: &RigidTransform) -> Result<(f64, f64)> {
    pred.validate()?;
    gt.validate()?;
    let diff = pred.inverse().compose(gt);
    Ok((diff.translation().norm(), diff.rotation_angle()))
}

/// Fraction of ground-truth matches recovered; `None` when the frame has none.
pub fn matching_score(predicted: &MatchSet, labels: &CorrespondenceLabels) -> Option<f64> {
    if labels.matched.is_empty() {
        return None;
    }
    let hits = predicted
        .pairs
        .iter()
        .filter(|p| labels.matched.contains(&(p.i, p.j)))
        .count();
    Some(hits as f64 / labels.matched.len() as f64)
}

/// Mean over frames that have ground-truth matches.
pub fn aggregate_matching_score(scores: &[Option<f64>]) -> Option<f64> {
    let valid: Vec<f64> = scores.iter().flatten().copied().collect();
    (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64)
}
