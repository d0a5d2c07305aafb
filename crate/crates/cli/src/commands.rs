use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use pillarmatch::cloud::kitti::KittiSequence;
use pillarmatch::eval::{aggregate, evaluate, render_table, Matcher};
use pillarmatch::io::{
    kitti_pairs, load_dataset, synthesize_pairs, write_dataset, Checkpoint, DatasetManifest, DatasetSource, PairRecord,
};
use pillarmatch::learn::{train as train_model, TrainState, TrainingPair};
use pillarmatch::network::ModelParameters;
use pillarmatch::register::matching_score;
use pillarmatch::transport::{extract_matches, write_assignment_csv, MatchSet};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::failure::Failure;

const CHECKPOINT_FILE: &str = "checkpoint.bin";

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let records = synthesize_pairs(cfg.seed, cfg.synth.count, &cfg.scene, &cfg.prepare)?;
    let manifest = DatasetManifest::new(
        DatasetSource::Synthetic { seed: cfg.seed, scene: cfg.scene.clone() },
        cfg.prepare.clone(),
    );
    let tagged: Vec<_> = records.into_iter().map(|r| (r, None)).collect();
    write_dataset(out, manifest, &tagged)?;
    cfg.echo(out)?;
    println!("wrote {} synthetic pairs to {}", tagged.len(), out.display());
    Ok(())
}

pub fn preprocess(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let root = cfg
        .kitti
        .root
        .clone()
        .ok_or_else(|| Failure::Usage("no KITTI root; pass --kitti-root or set kitti.root".into()))?;
    let splits = cfg
        .kitti
        .train_sequences
        .iter()
        .map(|s| (s, "train"))
        .chain(cfg.kitti.val_sequences.iter().map(|s| (s, "val")));
    let mut tagged = Vec::new();
    let mut sequences = Vec::new();
    for (seq, split) in splits {
        let recs = kitti_pairs(&KittiSequence::new(&root, seq.as_str()), &cfg.kitti.frame_distances, &cfg.prepare)?;
        info!("sequence {seq}: {} pairs ({split})", recs.len());
        tagged.extend(recs.into_iter().map(|r| (r, Some(split.to_string()))));
        sequences.push(seq.clone());
    }
    if sequences.is_empty() {
        return Err(Failure::Usage("no sequences; set kitti.train_sequences or kitti.val_sequences".into()));
    }
    let source = DatasetSource::Kitti { root, sequences, frame_distances: cfg.kitti.frame_distances.clone() };
    write_dataset(out, DatasetManifest::new(source, cfg.prepare.clone()), &tagged)?;
    cfg.echo(out)?;
    println!("wrote {} KITTI pairs to {}", tagged.len(), out.display());
    Ok(())
}

fn check_pair_fits(model: &ModelParameters<f32>, rec: &PairRecord) -> Result<(), Failure> {
    let h = &model.config().hyper;
    let p = &rec.header;
    if (h.n, h.m, h.z) != (p.n, p.m, p.z) {
        return Err(Failure::Usage(format!(
            "model expects n={} m={} z={}, pair {:?} has n={} m={} z={}",
            h.n, h.m, h.z, p.origin, p.n, p.m, p.z
        )));
    }
    Ok(())
}

fn load_model(cfg: &RunConfig, sinkhorn_override: bool, path: &Path) -> Result<ModelParameters<f32>, Failure> {
    let mut model = Checkpoint::load(path)?.model;
    if sinkhorn_override {
        let marginals = model.config().options.marginals;
        model.set_sinkhorn(cfg.model.hyper.sinkhorn_iters, cfg.model.options.sinkhorn_mode, marginals)?;
    }
    Ok(model)
}

pub fn train(cfg: &mut RunConfig, data: &Path, split: Option<&str>, resume: Option<&Path>, run_dir: &Path) -> Result<(), Failure> {
    let (manifest, records) = load_dataset(data, split)?;
    if records.is_empty() {
        return Err(Failure::Usage(format!("{} has no pairs for split {split:?}", data.display())));
    }
    cfg.prepare = manifest.prepare.clone();
    let state = match resume {
        Some(path) => {
            let state = Checkpoint::load(path)?.into_state(cfg.train.adam);
            if state.model.config() != &cfg.model {
                warn!("resuming with the checkpoint's model configuration");
            }
            cfg.model = state.model.config().clone();
            state
        }
        None => {
            let h = &mut cfg.model.hyper;
            (h.n, h.m, h.z, h.d) = (manifest.prepare.n, manifest.prepare.m, manifest.prepare.z, manifest.prepare.d);
            TrainState::new(ModelParameters::init(&cfg.model, cfg.seed)?, cfg.train.adam)
        }
    };
    for rec in &records {
        check_pair_fits(&state.model, rec)?;
    }
    cfg.echo(run_dir)?;
    let pairs: Vec<TrainingPair> = records.iter().map(PairRecord::training_pair).collect();
    let ckpt_path = run_dir.join(CHECKPOINT_FILE);
    let history_path = run_dir.join("history.jsonl");
    let config = cfg.train.clone();
    let state = train_model(&pairs, &config, state, |s| {
        let mut out = create(&history_path).map_err(|e| pillarmatch::Error::Format(e.to_string()))?;
        for rec in &s.history {
            let line = serde_json::to_string(rec).expect("record serializes");
            writeln!(out, "{line}").map_err(|e| pillarmatch::Error::Format(e.to_string()))?;
        }
        if config.checkpoint_every.is_some_and(|k| k > 0 && s.epoch % k == 0) {
            Checkpoint::from_state(s, &config).save(&ckpt_path)?;
        }
        Ok(())
    })?;
    Checkpoint::from_state(&state, &config).save(&ckpt_path)?;
    match state.history.last() {
        Some(r) => println!(
            "epoch {} steps {} loss {:.5} precision {:.4} accuracy {:.4}",
            r.epoch, r.steps, r.loss, r.precision, r.accuracy
        ),
        None => println!("nothing to train: already at epoch {}", state.epoch),
    }
    println!("checkpoint {}", ckpt_path.display());
    Ok(())
}

pub struct MatchOutputs {
    pub run_dir: PathBuf,
    pub dump_assignment: Option<PathBuf>,
    pub plot_export: Option<PathBuf>,
}

#[derive(Serialize)]
struct Timing {
    runs: usize,
    mean_ms: f64,
    min_ms: f64,
    max_ms: f64,
}

pub fn match_pair(
    cfg: &mut RunConfig,
    sinkhorn_override: bool,
    checkpoint: &Path,
    pair: &Path,
    outputs: &MatchOutputs,
) -> Result<(), Failure> {
    if cfg.timing.runs == 0 {
        return Err(Failure::Usage("timing needs at least one run".into()));
    }
    let model = load_model(cfg, sinkhorn_override, checkpoint)?;
    cfg.model = model.config().clone();
    let rec = PairRecord::load(pair)?;
    check_pair_fits(&model, &rec)?;
    let input = rec.input();
    let mut times = Vec::with_capacity(cfg.timing.runs);
    let mut assignment = None;
    for _ in 0..cfg.timing.runs {
        let t = Instant::now();
        assignment = Some(model.infer(&input)?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let assignment = assignment.expect("at least one run");
    let matches = extract_matches(&assignment.log_p, cfg.eval.match_threshold)?;
    let labels = &rec.header.labels;
    let correct = matches.pairs.iter().filter(|p| labels.matched.contains(&(p.i, p.j))).count();
    let score = matching_score(&matches, labels);
    let timing = Timing {
        runs: times.len(),
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        min_ms: times.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: times.iter().copied().fold(0.0, f64::max),
    };

    cfg.echo(&outputs.run_dir)?;
    let report = json!({
        "origin": rec.header.origin,
        "n": rec.header.n,
        "m": rec.header.m,
        "match_threshold": cfg.eval.match_threshold,
        "matches": matches,
        "correct": correct,
        "matching_score": score,
        "timing": timing,
    });
    write_json(&outputs.run_dir.join("matches.json"), &report)?;
    if let Some(path) = &outputs.dump_assignment {
        let mut out = create(path)?;
        let rows: Vec<usize> = (0..rec.header.n).collect();
        let cols: Vec<usize> = (0..rec.header.m).collect();
        write_assignment_csv(&mut out, &assignment.log_p, &rows, &cols)
            .and_then(|_| out.flush())
            .map_err(|e| Failure::io(path, e))?;
    }
    if let Some(path) = &outputs.plot_export {
        write_json(path, &plot_data(&rec, &matches))?;
    }
    println!(
        "{}: {} matches, {} correct, matching score {}",
        rec.header.origin,
        matches.len(),
        correct,
        score.map_or("-".into(), |s| format!("{s:.4}"))
    );
    println!(
        "forward latency over {} runs: mean {:.2} ms, min {:.2} ms, max {:.2} ms",
        timing.runs, timing.mean_ms, timing.min_ms, timing.max_ms
    );
    Ok(())
}

/// Key-points of both scans in their own frames plus one line per match.
fn plot_data(rec: &PairRecord, matches: &MatchSet) -> serde_json::Value {
    let xyz = |kps: &[pillarmatch::cloud::KeyPoint]| -> Vec<[f64; 3]> {
        kps.iter().map(|k| [k.position.x, k.position.y, k.position.z]).collect()
    };
    let labels = &rec.header.labels;
    let lines: Vec<_> = matches
        .pairs
        .iter()
        .map(|p| {
            json!({
                "source": p.i,
                "target": p.j,
                "confidence": p.confidence,
                "correct": labels.matched.contains(&(p.i, p.j)),
            })
        })
        .collect();
    json!({
        "origin": rec.header.origin,
        "gt_transform": rec.header.gt_transform,
        "source": xyz(&rec.header.source_keypoints),
        "target": xyz(&rec.header.target_keypoints),
        "lines": lines,
    })
}

pub fn eval(
    cfg: &mut RunConfig,
    sinkhorn_override: bool,
    data: &Path,
    split: Option<&str>,
    checkpoint: Option<&Path>,
    run_dir: &Path,
) -> Result<(), Failure> {
    if cfg.eval.matchers.contains(&Matcher::Ours) && checkpoint.is_none() {
        return Err(Failure::Usage("the learned matcher needs --checkpoint".into()));
    }
    let model = checkpoint.map(|p| load_model(cfg, sinkhorn_override, p)).transpose()?;
    if let Some(m) = &model {
        cfg.model = m.config().clone();
    }
    let (_, records) = load_dataset(data, split)?;
    let frames = evaluate(&records, model.as_ref(), &cfg.eval)?;
    cfg.echo(run_dir)?;
    let frames_path = run_dir.join("frames.jsonl");
    let mut out = create(&frames_path)?;
    for f in &frames {
        writeln!(out, "{}", serde_json::to_string(f).expect("record serializes")).map_err(|e| Failure::io(&frames_path, e))?;
    }
    out.flush().map_err(|e| Failure::io(&frames_path, e))?;
    let rows = aggregate(&frames);
    write_json(&run_dir.join("summary.json"), &rows)?;
    let table = render_table(&rows);
    let report_path = run_dir.join("report.txt");
    fs::write(&report_path, &table).map_err(|e| Failure::io(&report_path, e))?;
    print!("{table}");
    Ok(())
}
