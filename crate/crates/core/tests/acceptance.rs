//! Acceptance criteria. Run with `cargo test -p pillarmatch --test acceptance`.
//! Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use pillarmatch::autodiff::{grad_check, AutodiffError, Graph, Tensor};
use pillarmatch::cloud::kitti::{encode_kitti_scan, format_pose_line, load_kitti_scan, parse_pose_line};
use pillarmatch::cloud::{generate_synthetic_pair, prepare_pair, CorrespondenceLabels, PrepareConfig, SceneConfig};
use pillarmatch::eval::{aggregate, evaluate, render_table, EvalConfig, Matcher};
use pillarmatch::io::synthesize_pairs;
use pillarmatch::learn::{evaluate_matching, loss, AdamConfig, LossKind, TrainConfig, TrainState, TrainingPair};
use pillarmatch::network::{HyperParams, ModelConfig, ModelParameters, NormUsage, PairInput};
use pillarmatch::register::{estimate_transform_svd, transform_errors, RigidTransform};
use pillarmatch::transport::{marginal_deviation, sinkhorn, Marginals, SinkhornConfig};
use pillarmatch::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and budgets, one place.
const C1_SIZE: usize = 101;
const C1_MATRICES: u64 = 16;
const C1_TOL: f64 = 1e-5;
const C1_BUDGET: Duration = Duration::from_secs(1);
const C2_TOL: f64 = 1e-4;
const C2_STEP: f64 = 1e-5;
const C2_BUDGET: Duration = Duration::from_secs(120);
const C3_TOL: f64 = 1e-5;
const C4_SCENES: u64 = 100;
const C4_TOL: f64 = 1e-6;
const C4_BUDGET: Duration = Duration::from_secs(10);
const C5_TOL: f64 = 1e-9;
const C6_PRECISION: f64 = 0.9;
const C6_STEPS: u64 = 500;
const C6_BUDGET: Duration = Duration::from_secs(600);
const C7_STEPS: u64 = 500;
const C7_HELD_OUT: usize = 16;
const C8_ONE_HOT: f64 = 1e-6;
const C8_CLOSED_FORM: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn sinkhorn_marginals() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for seed in 0..C1_MATRICES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Tensor::from_fn(&[C1_SIZE, C1_SIZE], |_| rng.random_range(-10.0..10.0));
        let t = Instant::now();
        let p = sinkhorn(&m, &SinkhornConfig::default()).unwrap();
        slowest = slowest.max(t.elapsed());
        worst = worst.max(marginal_deviation(p.log_p.as_slice(), C1_SIZE, C1_SIZE, Marginals::Uniform));
    }
    outcome(
        worst < C1_TOL && slowest < C1_BUDGET,
        format!("max row/column deviation {worst:.2e} over {C1_MATRICES} matrices, slowest {slowest:.2?}"),
    )
}

fn toy_model_config(n: usize, z: usize, iters: usize) -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.hyper = HyperParams { n, m: n, z, d: 0.5, feature_depth: 8, heads: 2, layers: 2, sinkhorn_iters: iters };
    cfg.options.position_widths = vec![8, 16];
    cfg
}

fn ad(e: Error) -> AutodiffError {
    match e {
        Error::Autodiff(a) => a,
        other => AutodiffError::Argument(other.to_string()),
    }
}

fn full_pipeline_grad_check() -> Outcome {
    let prep = PrepareConfig { n: 4, m: 4, z: 4, ..Default::default() };
    let scene = SceneConfig { points: 800, ..Default::default() };
    let rec = synthesize_pairs(21, 1, &scene, &prep).unwrap().remove(0);
    let input: PairInput<f64> = rec.input().cast();
    // Every label class present so each loss term is exercised.
    let labels = CorrespondenceLabels {
        n: 4,
        m: 4,
        matched: vec![(0, 1), (1, 0)],
        unmatched_rows: vec![2],
        unmatched_cols: vec![3],
        ignored_rows: vec![3],
        ignored_cols: vec![2],
    };
    let model = ModelParameters::<f64>::init(&toy_model_config(4, 4, 10), 5).unwrap();
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for kind in LossKind::ALL {
        let report = grad_check(
            |g: &mut Graph<f64>, vars| {
                let out = model.forward(g, vars, &[&input], NormUsage::Batch).map_err(ad)?;
                loss(g, kind, out.pairs[0].log_assignment, &labels).map_err(ad)
            },
            model.tensors(),
            C2_STEP,
        )
        .unwrap();
        worst = worst.max(report.max_rel_error);
        parts.push(format!("{kind} {:.2e} ({} elements)", report.max_rel_error, report.checked));
    }
    let elapsed = t.elapsed();
    outcome(
        worst < C2_TOL && elapsed < C2_BUDGET,
        format!("max relative error {}; {elapsed:.2?}", parts.join(", ")),
    )
}

fn permute_rows(t: &Tensor<f64>, perm: &[usize]) -> Tensor<f64> {
    let data = perm.iter().flat_map(|&k| t.row(k).to_vec()).collect();
    Tensor::matrix(perm.len(), t.cols(), data).unwrap()
}

// Checked in f64: in f32 the reordered sums alone drift by a few 1e-5 in log space.
fn permutation_equivariance() -> Outcome {
    let cfg = toy_model_config(6, 4, 100);
    let model = ModelParameters::<f64>::init(&cfg, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rand = |r: usize, c: usize, s: f64| Tensor::from_fn(&[r, c], |_| s * rng.random_range(-1.0..1.0));
    let input = PairInput {
        source_stacks: rand(6, 44, 1.0),
        source_positions: rand(6, 3, 10.0),
        target_stacks: rand(6, 44, 1.0),
        target_positions: rand(6, 3, 10.0),
    };
    let perm = [3usize, 5, 0, 4, 1, 2];
    let a = model.infer(&input).unwrap().log_p;
    let cols = model.infer(&input.permute_target(&perm)).unwrap().log_p;
    let mut src = input.clone();
    src.source_stacks = permute_rows(&input.source_stacks, &perm);
    src.source_positions = permute_rows(&input.source_positions, &perm);
    let rows = model.infer(&src).unwrap().log_p;
    // Index 6 is the dustbin, which stays put.
    let full: Vec<usize> = perm.iter().copied().chain([6]).collect();
    let (mut dev_cols, mut dev_rows): (f64, f64) = (0.0, 0.0);
    for i in 0..7 {
        for (new, &old) in full.iter().enumerate() {
            dev_cols = dev_cols.max((cols.at(i, new) - a.at(i, old)).abs());
            dev_rows = dev_rows.max((rows.at(new, i) - a.at(old, i)).abs());
        }
    }
    outcome(
        dev_cols < C3_TOL && dev_rows < C3_TOL,
        format!("max abs deviation {dev_cols:.2e} (target permuted) / {dev_rows:.2e} (source permuted) on a 6x6 pair"),
    )
}

fn transform_recovery() -> Outcome {
    let prep = PrepareConfig { n: 100, m: 100, z: 8, ..Default::default() };
    let scene = SceneConfig::default();
    let t = Instant::now();
    let (mut dt_max, mut dr_max): (f64, f64) = (0.0, 0.0);
    for seed in 0..C4_SCENES {
        let pair = generate_synthetic_pair(seed, &scene).unwrap();
        let p = prepare_pair(&pair, &prep).unwrap();
        let s: Vec<_> = p.labels.matched.iter().map(|&(i, _)| p.source.keypoints[i].position).collect();
        let q: Vec<_> = p.labels.matched.iter().map(|&(_, j)| p.target.keypoints[j].position).collect();
        match estimate_transform_svd(&s, &q).and_then(|est| transform_errors(&est, &pair.gt_transform)) {
            Ok((dt, dr)) => {
                dt_max = dt_max.max(dt);
                dr_max = dr_max.max(dr);
            }
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        }
    }
    let elapsed = t.elapsed();
    outcome(
        dt_max < C4_TOL && dr_max < C4_TOL && elapsed < C4_BUDGET,
        format!("worst T_delta {dt_max:.2e} m, T_theta {dr_max:.2e} rad over {C4_SCENES} scenes; {elapsed:.2?}"),
    )
}

fn metric_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = RigidTransform::from_axis_angle(
        Vector3::new(rng.random(), rng.random(), rng.random()),
        rng.random_range(-3.0..3.0),
        Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), 1.0),
    );
    let (a_dt, a_dr) = transform_errors(&t, &t).unwrap();
    let id = RigidTransform::identity();
    let (b_dt, b_dr) = transform_errors(&id, &RigidTransform::from_translation(Vector3::new(3.0, 4.0, 0.0))).unwrap();
    let (_, c_dr) = transform_errors(&id, &RigidTransform::from_axis_angle(Vector3::new(0.3, -1.0, 2.0), 0.3, Vector3::zeros())).unwrap();
    let pass = a_dt < C5_TOL && a_dr < C5_TOL && b_dt == 5.0 && b_dr == 0.0 && (c_dr - 0.3).abs() < C5_TOL;
    outcome(
        pass,
        format!("self ({a_dt:.1e}, {a_dr:.1e}); translation T_delta {b_dt}; rotation T_theta {c_dr:.12}"),
    )
}

fn desk_model() -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.hyper = HyperParams { n: 32, m: 32, z: 32, d: 0.5, feature_depth: 32, heads: 8, layers: 6, sinkhorn_iters: 100 };
    cfg
}

fn desk_prepare() -> PrepareConfig {
    PrepareConfig { n: 32, m: 32, z: 32, d: 0.5, ..Default::default() }
}

fn train_desk(data: &[TrainingPair], steps: u64) -> TrainState {
    let cfg = TrainConfig {
        epochs: usize::MAX,
        max_steps: Some(steps),
        loss: LossKind::Nllp,
        adam: AdamConfig { lr: 1e-4, ..Default::default() },
        seed: 0,
        ..Default::default()
    };
    let state = TrainState::new(ModelParameters::init(&desk_model(), 0).unwrap(), cfg.adam);
    pillarmatch::learn::train(data, &cfg, state, |_| Ok(())).unwrap()
}

fn desk_trainability() -> Outcome {
    let recs = synthesize_pairs(1, 32, &SceneConfig::default(), &desk_prepare()).unwrap();
    let data: Vec<TrainingPair> = recs.iter().map(|r| r.training_pair()).collect();
    let t = Instant::now();
    let state = train_desk(&data, C6_STEPS);
    let elapsed = t.elapsed();
    let counts = evaluate_matching(&state.model, &data, 0.2).unwrap();
    let last = state.history.last().unwrap();
    outcome(
        counts.precision() >= C6_PRECISION && state.optimizer.step <= C6_STEPS && elapsed <= C6_BUDGET,
        format!(
            "training-set precision {:.3} (accuracy {:.3}) after {} steps; last epoch loss {:.2}; {elapsed:.1?}",
            counts.precision(),
            counts.accuracy(),
            state.optimizer.step,
            last.loss
        ),
    )
}

fn learned_beats_nn() -> Outcome {
    let scene = SceneConfig { rotation_bound: 30f64.to_radians(), overlap: 0.5, ..Default::default() };
    let train_recs = synthesize_pairs(1, 32, &scene, &desk_prepare()).unwrap();
    let held_out = synthesize_pairs(1_000_003, C7_HELD_OUT, &scene, &desk_prepare()).unwrap();
    let data: Vec<TrainingPair> = train_recs.iter().map(|r| r.training_pair()).collect();
    let state = train_desk(&data, C7_STEPS);
    let cfg = EvalConfig { matchers: vec![Matcher::Nn, Matcher::Ours], ..Default::default() };
    let rows = aggregate(&evaluate(&held_out, Some(&state.model), &cfg).unwrap());
    let score = |m: Matcher| rows.iter().find(|r| r.matcher == m).and_then(|r| r.matching_score).unwrap_or(0.0);
    let (ours, nn) = (score(Matcher::Ours), score(Matcher::Nn));
    outcome(ours > nn, format!("held-out matching score: ours {ours:.3} vs NN {nn:.3} ({C7_HELD_OUT} pairs)"))
}

fn loss_sanity() -> Outcome {
    let l = CorrespondenceLabels {
        n: 5,
        m: 5,
        matched: vec![(0, 2), (1, 0), (3, 3)],
        unmatched_rows: vec![2],
        unmatched_cols: vec![1],
        ignored_rows: vec![4],
        ignored_cols: vec![4],
    };
    let eval = |p: &Tensor<f64>, kind: LossKind, l: &CorrespondenceLabels| {
        let mut g = Graph::new();
        let v = g.constant(p.clone()).unwrap();
        let out = loss(&mut g, kind, v, l).unwrap();
        g.value(out).as_slice()[0]
    };
    let mut one_hot = Tensor::filled(&[6, 6], -60.0);
    for (i, j) in l.gt_cells().into_iter().chain([(4, 5), (5, 4)]) {
        one_hot.as_mut_slice()[i * 6 + j] = 0.0;
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in LossKind::ALL {
        let v = eval(&one_hot, kind, &l);
        ok &= (0.0..=C8_ONE_HOT).contains(&v);
        parts.push(format!("{kind} one-hot {v:.1e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let m = Tensor::from_fn(&[6, 6], |_| rng.random_range(-8.0..8.0));
        let p = sinkhorn(&m, &SinkhornConfig::default()).unwrap().log_p;
        for kind in LossKind::ALL {
            ok &= eval(&p, kind, &l) >= 0.0;
        }
    }
    let uniform = Tensor::filled(&[6, 6], -(6f64).ln());
    let g = l.gt_count() as f64;
    let nll_err = (eval(&uniform, LossKind::Nll, &l) - g * 6f64.ln()).abs();
    let matched_only = CorrespondenceLabels { unmatched_rows: vec![], unmatched_cols: vec![], ignored_rows: vec![2, 4], ignored_cols: vec![1, 4], ..l.clone() };
    let gm = matched_only.gt_count() as f64;
    let dce_err = (eval(&uniform, LossKind::Dce, &matched_only) - 2.0 * gm * 6f64.ln()).abs();
    ok &= nll_err < C8_CLOSED_FORM && dce_err < C8_CLOSED_FORM;
    parts.push(format!("NLL closed-form error {nll_err:.1e}, DCE {dce_err:.1e}; non-negative on 50 random assignments"));
    outcome(ok, parts.join("; "))
}

fn ingestion_round_trip() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let bytes = std::fs::read(dir.join("scan_160.bin")).unwrap();
    let cloud = load_kitti_scan(&dir.join("scan_160.bin")).unwrap();
    let same_bytes = encode_kitti_scan(&cloud) == bytes;
    let poses = std::fs::read_to_string(dir.join("poses.txt")).unwrap();
    let lines_ok = poses
        .lines()
        .all(|line| parse_pose_line(line).map(|p| format_pose_line(&p) == line).unwrap_or(false));
    outcome(
        bytes.len() == 160 && cloud.len() == 10 && same_bytes && lines_ok,
        format!("{} bytes -> {} points, byte-identical {same_bytes}; pose lines exact {lines_ok}", bytes.len(), cloud.len()),
    )
}

fn report_shape() -> Outcome {
    println!("  reference only, not reproduced here (needs full KITTI training on GPU hardware):");
    println!("    matching score Ours 0.909 / 0.722 / 0.559 on V1 / V5 / V10, NN 0.485 on V1");
    println!("    loss comparison grid: NLLP trained on T1 reports P = 89.6, A = 81.2 on V1");
    println!("    forward latency 27 ms per pair on a GPU");
    let prep = PrepareConfig { n: 16, m: 16, z: 4, ..Default::default() };
    let mut recs = Vec::new();
    for d in [1u32, 5, 10] {
        let scene = SceneConfig { points: 1200, frame_distance: d, ..Default::default() };
        recs.extend(synthesize_pairs(d as u64, 2, &scene, &prep).unwrap());
    }
    let model = ModelParameters::init(&toy_model_config(16, 4, 20), 0).unwrap();
    let rows = aggregate(&evaluate(&recs, Some(&model), &EvalConfig::default()).unwrap());
    let table = render_table(&rows);
    let header = table.lines().next().unwrap_or("");
    let splits = ["V1", "V5", "V10"].iter().all(|s| header.split_whitespace().any(|w| w == *s));
    let blocks = ["Matching score", "Translational error [m]", "Rotational error [rad]", "Failures"]
        .iter()
        .all(|b| table.contains(b));
    let matchers = ["ICP", "NN", "Ours", "VM"].iter().all(|m| table.lines().any(|l| l.trim_start().starts_with(m)));
    for line in table.lines() {
        println!("    | {line}");
    }
    outcome(splits && blocks && matchers, "report mirrors matcher x {M_s, T_delta, T_theta} x {V1, V5, V10} plus failures")
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // Under `cargo test -- --list` or filters meant for other targets, stay quiet.
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Sinkhorn doubly-stochastic invariant", sinkhorn_marginals),
        ("full-pipeline differentiability", full_pipeline_grad_check),
        ("permutation equivariance", permutation_equivariance),
        ("transform recovery from ground-truth matches", transform_recovery),
        ("metric correctness", metric_correctness),
        ("desk-scale trainability", desk_trainability),
        ("learned matcher beats nearest neighbors", learned_beats_nn),
        ("loss sanity", loss_sanity),
        ("ingestion round-trip", ingestion_round_trip),
        ("non-reproducible references and report shape", report_shape),
    ];
    // Numeric arguments select a subset, e.g. `-- 3 5`.
    let only: Vec<usize> = args.iter().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(k + 1)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2}: {} - {name}: {} [{:.1?}]",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
