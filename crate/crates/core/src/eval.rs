//! Registration benchmark: per-frame records and a matcher x metric x split table.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::io::PairRecord;
use crate::network::ModelParameters;
use crate::register::{
    estimate_transform_svd, icp, matching_score, nn_matcher, transform_errors, IcpConfig, RigidTransform,
};
use crate::transport::{extract_matches, MatchSet};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    /// Point-to-point ICP on the key-points, from the identity.
    Icp,
    /// Mutual nearest neighbors on raw key-point coordinates.
    Nn,
    /// The learned matcher.
    Ours,
    /// All valid ground-truth matches.
    Vm,
}

impl Matcher {
    pub const ALL: [Matcher; 4] = [Matcher::Icp, Matcher::Nn, Matcher::Ours, Matcher::Vm];

    pub fn name(self) -> &'static str {
        match self {
            Matcher::Icp => "icp",
            Matcher::Nn => "nn",
            Matcher::Ours => "ours",
            Matcher::Vm => "vm",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Matcher::Icp => "ICP",
            Matcher::Nn => "NN",
            Matcher::Ours => "Ours",
            Matcher::Vm => "VM",
        }
    }

    /// Whether the matcher produces correspondences that can be scored.
    pub fn has_matching_score(self) -> bool {
        matches!(self, Matcher::Nn | Matcher::Ours)
    }
}

impl FromStr for Matcher {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Matcher::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Argument(format!("unknown matcher {s:?}, expected icp, nn, ours or vm")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub matchers: Vec<Matcher>,
    pub match_threshold: f64,
    pub icp: IcpConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            matchers: Matcher::ALL.to_vec(),
            match_threshold: 0.2,
            icp: IcpConfig::default(),
        }
    }
}

/// Outcome of one matcher on one frame pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub origin: String,
    pub frame_distance: u32,
    pub matcher: Matcher,
    pub matches: usize,
    pub matching_score: Option<f64>,
    pub translational_error: Option<f64>,
    pub rotational_error: Option<f64>,
    /// Why no transform could be estimated.
    pub failure: Option<String>,
}

fn positions(kps: &[crate::cloud::KeyPoint]) -> Vec<Point3<f64>> {
    kps.iter().map(|k| k.position).collect()
}

fn estimate_from(matches: &MatchSet, src: &[Point3<f64>], tgt: &[Point3<f64>]) -> Result<RigidTransform> {
    let s: Vec<_> = matches.pairs.iter().map(|p| src[p.i]).collect();
    let t: Vec<_> = matches.pairs.iter().map(|p| tgt[p.j]).collect();
    estimate_transform_svd(&s, &t)
}

fn check_model(model: &ModelParameters<f32>, rec: &PairRecord) -> Result<()> {
    let h = &model.config().hyper;
    let r = &rec.header;
    if h.z != r.z || h.n != r.n || h.m != r.m {
        return Err(Error::Config(format!(
            "model expects n={} m={} z={}, pair has n={} m={} z={}",
            h.n, h.m, h.z, r.n, r.m, r.z
        )));
    }
    Ok(())
}

/// Runs `matcher` on one pair.
pub fn evaluate_frame(
    frame: usize,
    rec: &PairRecord,
    matcher: Matcher,
    model: Option<&ModelParameters<f32>>,
    config: &EvalConfig,
) -> Result<FrameRecord> {
    let header = &rec.header;
    header.gt_transform.validate()?;
    let src = positions(&header.source_keypoints);
    let tgt = positions(&header.target_keypoints);
    let (matches, estimate) = match matcher {
        Matcher::Icp => (None, icp(&src, &tgt, &RigidTransform::identity(), &config.icp).map(|r| r.transform)),
        Matcher::Vm => {
            let s: Vec<_> = header.labels.matched.iter().map(|&(i, _)| src[i]).collect();
            let t: Vec<_> = header.labels.matched.iter().map(|&(_, j)| tgt[j]).collect();
            (None, estimate_transform_svd(&s, &t))
        }
        Matcher::Nn => {
            let m = nn_matcher(&src, &tgt);
            let est = estimate_from(&m, &src, &tgt);
            (Some(m), est)
        }
        Matcher::Ours => {
            let model = model.ok_or_else(|| Error::Config("the learned matcher needs a checkpoint".into()))?;
            check_model(model, rec)?;
            let a = model.infer(&rec.input())?;
            let m = extract_matches(&a.log_p, config.match_threshold)?;
            let est = estimate_from(&m, &src, &tgt);
            (Some(m), est)
        }
    };
    let mut out = FrameRecord {
        frame,
        origin: header.origin.clone(),
        frame_distance: header.frame_distance,
        matcher,
        matches: matches.as_ref().map_or(header.labels.matched.len(), MatchSet::len),
        matching_score: matches.as_ref().and_then(|m| matching_score(m, &header.labels)),
        translational_error: None,
        rotational_error: None,
        failure: None,
    };
    match estimate {
        Ok(t) => {
            let (dt, dr) = transform_errors(&t, &header.gt_transform)?;
            out.translational_error = Some(dt);
            out.rotational_error = Some(dr);
        }
        Err(e @ (Error::InsufficientCorrespondences(_) | Error::DegenerateGeometry(_))) => {
            out.failure = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(out)
}

/// Every configured matcher on every pair.
pub fn evaluate(records: &[PairRecord], model: Option<&ModelParameters<f32>>, config: &EvalConfig) -> Result<Vec<FrameRecord>> {
    let mut out = Vec::with_capacity(records.len() * config.matchers.len());
    for (k, rec) in records.iter().enumerate() {
        for &m in &config.matchers {
            out.push(evaluate_frame(k, rec, m, model, config)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub matcher: Matcher,
    pub frame_distance: u32,
    pub frames: usize,
    /// Mean over frames that have ground-truth matches.
    pub matching_score: Option<f64>,
    /// Means over frames with a transform estimate.
    pub translational_error: Option<f64>,
    pub rotational_error: Option<f64>,
    pub failures: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn aggregate(records: &[FrameRecord]) -> Vec<AggregateRow> {
    let keys: BTreeSet<(Matcher, u32)> = records.iter().map(|r| (r.matcher, r.frame_distance)).collect();
    keys.into_iter()
        .map(|(matcher, frame_distance)| {
            let rs: Vec<&FrameRecord> = records
                .iter()
                .filter(|r| r.matcher == matcher && r.frame_distance == frame_distance)
                .collect();
            AggregateRow {
                matcher,
                frame_distance,
                frames: rs.len(),
                matching_score: mean(rs.iter().filter_map(|r| r.matching_score)),
                translational_error: mean(rs.iter().filter_map(|r| r.translational_error)),
                rotational_error: mean(rs.iter().filter_map(|r| r.rotational_error)),
                failures: rs.iter().filter(|r| r.failure.is_some()).count(),
            }
        })
        .collect()
}

/// Text table with one block per metric, one row per matcher and one
/// column per frame distance (`V1`, `V5`, ...).
pub fn render_table(rows: &[AggregateRow]) -> String {
    let splits: BTreeSet<u32> = rows.iter().map(|r| r.frame_distance).collect();
    let matchers: BTreeSet<Matcher> = rows.iter().map(|r| r.matcher).collect();
    let cell = |m: Matcher, d: u32, f: &dyn Fn(&AggregateRow) -> Option<String>| {
        rows.iter()
            .find(|r| r.matcher == m && r.frame_distance == d)
            .and_then(f)
            .unwrap_or_else(|| "-".into())
    };
    let mut out = String::new();
    let _ = write!(out, "{:<28}", "");
    for d in &splits {
        let _ = write!(out, "{:>12}", format!("V{d}"));
    }
    out.push('\n');
    type Getter = fn(&AggregateRow) -> Option<String>;
    let blocks: [(&str, Getter, bool); 4] = [
        ("Matching score", |r| r.matching_score.map(|v| format!("{v:.3}")), true),
        ("Translational error [m]", |r| r.translational_error.map(|v| format!("{v:.4}")), false),
        ("Rotational error [rad]", |r| r.rotational_error.map(|v| format!("{v:.5}")), false),
        ("Failures / frames", |r| Some(format!("{}/{}", r.failures, r.frames)), false),
    ];
    for (title, get, scored_only) in blocks {
        out.push_str(title);
        out.push('\n');
        for &m in &matchers {
            if scored_only && !m.has_matching_score() {
                continue;
            }
            let _ = write!(out, "  {:<26}", m.label());
            for &d in &splits {
                let _ = write!(out, "{:>12}", cell(m, d, &get));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(matcher: Matcher, d: u32, score: f64) -> AggregateRow {
        AggregateRow {
            matcher,
            frame_distance: d,
            frames: 2,
            matching_score: matcher.has_matching_score().then_some(score),
            translational_error: Some(0.5),
            rotational_error: Some(0.01),
            failures: 0,
        }
    }

    #[test]
    fn table_has_one_column_per_split() {
        let rows = vec![row(Matcher::Nn, 1, 0.485), row(Matcher::Ours, 1, 0.909), row(Matcher::Nn, 5, 0.3), row(Matcher::Vm, 1, 0.0)];
        let t = render_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].contains("V1") && lines[0].contains("V5"));
        assert!(t.contains("0.909"));
        let score_block: Vec<&str> = lines[1..4].to_vec();
        assert!(score_block[0].starts_with("Matching score"));
        assert!(!score_block.iter().any(|l| l.contains("VM")));
        assert!(lines.iter().any(|l| l.trim_start().starts_with("Ours") && l.trim_end().ends_with('-')));
    }

    #[test]
    fn matcher_names_parse() {
        for m in Matcher::ALL {
            assert_eq!(m.name().parse::<Matcher>().unwrap(), m);
        }
        assert!("pfh".parse::<Matcher>().is_err());
    }

    #[test]
    fn aggregate_means_skip_failures() {
        let base = FrameRecord {
            frame: 0,
            origin: String::new(),
            frame_distance: 1,
            matcher: Matcher::Nn,
            matches: 3,
            matching_score: Some(0.5),
            translational_error: Some(1.0),
            rotational_error: Some(0.1),
            failure: None,
        };
        let failed = FrameRecord {
            matching_score: Some(0.0),
            translational_error: None,
            rotational_error: None,
            failure: Some("too few".into()),
            ..base.clone()
        };
        let agg = aggregate(&[base, failed]);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].matching_score, Some(0.25));
        assert_eq!(agg[0].translational_error, Some(1.0));
        assert_eq!(agg[0].failures, 1);
    }
}
