use pillarmatch::cloud::{PrepareConfig, SceneConfig};
use pillarmatch::eval::{aggregate, evaluate, render_table, EvalConfig, Matcher};
use pillarmatch::io::synthesize_pairs;
use pillarmatch::network::{HyperParams, ModelConfig, ModelParameters};

fn records(frame_distance: u32) -> Vec<pillarmatch::io::PairRecord> {
    let scene = SceneConfig { points: 1200, frame_distance, ..Default::default() };
    synthesize_pairs(frame_distance as u64, 3, &scene, &PrepareConfig { n: 16, m: 16, z: 4, ..Default::default() }).unwrap()
}

#[test]
fn vm_row_is_exact_on_noiseless_pairs() {
    let cfg = EvalConfig { matchers: vec![Matcher::Vm], ..Default::default() };
    let frames = evaluate(&records(1), None, &cfg).unwrap();
    assert_eq!(frames.len(), 3);
    for f in &frames {
        assert!(f.translational_error.unwrap() < 1e-6 && f.rotational_error.unwrap() < 1e-6, "{f:?}");
        assert_eq!(f.matching_score, None);
    }
}

#[test]
fn report_covers_every_matcher_and_split() {
    let mut recs = records(1);
    recs.extend(records(5));
    let mut mc = ModelConfig::default();
    mc.hyper = HyperParams { n: 16, m: 16, z: 4, d: 0.5, feature_depth: 8, heads: 2, layers: 2, sinkhorn_iters: 20 };
    let model = ModelParameters::init(&mc, 0).unwrap();
    let frames = evaluate(&recs, Some(&model), &EvalConfig::default()).unwrap();
    assert_eq!(frames.len(), 6 * 4);
    let line = serde_json::to_string(&frames[0]).unwrap();
    assert!(line.contains("\"matcher\":\"icp\""));
    let rows = aggregate(&frames);
    assert_eq!(rows.len(), 8);
    let table = render_table(&rows);
    let header = table.lines().next().unwrap();
    assert!(header.contains("V1") && header.contains("V5"));
    for title in ["Matching score", "Translational error [m]", "Rotational error [rad]", "Failures"] {
        assert!(table.contains(title), "{table}");
    }
    for label in ["ICP", "NN", "Ours", "VM"] {
        assert!(table.lines().any(|l| l.trim_start().starts_with(label)));
    }
}

#[test]
fn learned_matcher_needs_a_compatible_model() {
    let recs = records(1);
    let cfg = EvalConfig { matchers: vec![Matcher::Ours], ..Default::default() };
    assert!(matches!(evaluate(&recs, None, &cfg), Err(pillarmatch::Error::Config(_))));
    let mut mc = ModelConfig::default();
    mc.hyper = HyperParams { n: 8, m: 8, z: 4, d: 0.5, feature_depth: 8, heads: 2, layers: 2, sinkhorn_iters: 5 };
    let model = ModelParameters::init(&mc, 0).unwrap();
    assert!(matches!(evaluate(&recs, Some(&model), &cfg), Err(pillarmatch::Error::Config(_))));
}
