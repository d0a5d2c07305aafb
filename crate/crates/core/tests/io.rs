use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use pillarmatch::cloud::kitti::{write_kitti_poses, write_kitti_scan, KittiSequence};
use pillarmatch::cloud::{generate_synthetic_pair, PrepareConfig, SceneConfig};
use pillarmatch::io::{
    kitti_pairs, load_dataset, read_manifest, synthesize_pairs, write_dataset, Checkpoint, DatasetManifest,
    DatasetSource, PairRecord,
};
use pillarmatch::learn::{AdamConfig, TrainConfig, TrainState};
use pillarmatch::network::{HyperParams, ModelConfig, ModelParameters};
use pillarmatch::register::RigidTransform;
use pillarmatch::Error;

fn prep() -> PrepareConfig {
    PrepareConfig { n: 8, m: 8, z: 4, ..Default::default() }
}

fn scene() -> SceneConfig {
    SceneConfig { points: 600, ..Default::default() }
}

#[test]
fn pair_file_round_trip() {
    let rec = synthesize_pairs(1, 1, &scene(), &prep()).unwrap().remove(0);
    let bytes = rec.encode();
    let back = PairRecord::decode(&bytes).unwrap();
    assert_eq!(back, rec);
    assert_eq!(back.encode(), bytes);
    assert!(matches!(PairRecord::decode(&bytes[..20]), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(PairRecord::decode(&bad), Err(Error::Format(_))));
}

#[test]
fn synthetic_datasets_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let recs: Vec<_> = synthesize_pairs(1, 3, &scene(), &prep()).unwrap().into_iter().map(|r| (r, None)).collect();
        let m = DatasetManifest::new(DatasetSource::Synthetic { seed: 1, scene: scene() }, prep());
        write_dataset(d.path(), m, &recs).unwrap();
    }
    let list = |p: &Path| {
        let mut v: Vec<_> = fs::read_dir(p).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    let names = list(dirs[0].path());
    assert_eq!(names, list(dirs[1].path()));
    assert_eq!(names.len(), 4);
    for n in names {
        assert_eq!(fs::read(dirs[0].path().join(&n)).unwrap(), fs::read(dirs[1].path().join(&n)).unwrap());
    }
}

#[test]
fn empty_dataset_has_a_valid_manifest() {
    let d = tempfile::tempdir().unwrap();
    let m = DatasetManifest::new(DatasetSource::Synthetic { seed: 1, scene: scene() }, prep());
    write_dataset(d.path(), m, &[]).unwrap();
    let (m, recs) = load_dataset(d.path(), None).unwrap();
    assert!(m.pairs.is_empty() && recs.is_empty());
    assert_eq!(m.prepare.radii.match_radius, 0.1);
    assert_eq!(m.prepare.radii.unmatch_radius, 0.5);
}

#[test]
fn splits_filter_loaded_pairs() {
    let d = tempfile::tempdir().unwrap();
    let recs = synthesize_pairs(2, 3, &scene(), &prep()).unwrap();
    let tagged: Vec<_> = recs.into_iter().zip(["train", "val", "train"]).map(|(r, s)| (r, Some(s.to_string()))).collect();
    let m = DatasetManifest::new(DatasetSource::Synthetic { seed: 2, scene: scene() }, prep());
    write_dataset(d.path(), m, &tagged).unwrap();
    assert_eq!(load_dataset(d.path(), Some("train")).unwrap().1.len(), 2);
    assert_eq!(load_dataset(d.path(), Some("val")).unwrap().1, vec![tagged[1].0.clone()]);
    fs::write(d.path().join("manifest.json"), "{\"format\": \"other\"}").unwrap();
    assert!(matches!(read_manifest(d.path()), Err(Error::Format(_))));
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let mut cfg = ModelConfig::default();
    cfg.hyper = HyperParams { n: 8, m: 8, z: 4, d: 0.5, feature_depth: 8, heads: 2, layers: 2, sinkhorn_iters: 10 };
    let state = TrainState::new(ModelParameters::init(&cfg, 1).unwrap(), AdamConfig::default());
    let ck = Checkpoint::from_state(&state, &TrainConfig::default());
    let bytes = ck.encode();
    let back = Checkpoint::decode(&bytes).unwrap();
    assert_eq!(back.model, state.model);
    assert_eq!(back.encode(), bytes);
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("model.ckpt");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap().into_state(AdamConfig::default()), state);
    assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 4]), Err(Error::Format(_))));
    let mut v = bytes.clone();
    v[8] = 99;
    assert!(matches!(Checkpoint::decode(&v), Err(Error::Format(_))));
    assert!(matches!(Checkpoint::load(&d.path().join("nope")), Err(Error::Io { .. })));
}

fn fake_sequence(root: &Path, scans: usize, poses: usize) -> KittiSequence {
    let seq = KittiSequence::new(root, "00");
    fs::create_dir_all(seq.scan_dir()).unwrap();
    fs::create_dir_all(root.join("poses")).unwrap();
    let base = generate_synthetic_pair(4, &scene()).unwrap().source;
    let mut ps = Vec::new();
    for k in 0..scans.max(poses) {
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.3 * k as f64));
        if k < scans {
            let local = base.transformed(&pose.inverse());
            write_kitti_scan(&local, &seq.scan_dir().join(format!("{k:06}.bin"))).unwrap();
        }
        ps.push(pose);
    }
    write_kitti_poses(&ps[..poses], &seq.pose_file()).unwrap();
    seq
}

#[test]
fn kitti_preprocessing_counts_pairs() {
    let d = tempfile::tempdir().unwrap();
    let seq = fake_sequence(d.path(), 3, 3);
    let recs = kitti_pairs(&seq, &[1], &prep()).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.header.frame_distance == 1));
    assert!(recs[0].header.origin.contains("000000->000001"));
    let (dt, _) = pillarmatch::register::transform_errors(&RigidTransform::identity(), &recs[0].header.gt_transform).unwrap();
    assert!((dt - 0.3).abs() < 1e-6);
    assert!(!recs[0].header.labels.matched.is_empty());

    let e = tempfile::tempdir().unwrap();
    let seq5 = fake_sequence(e.path(), 5, 5);
    assert!(kitti_pairs(&seq5, &[10], &prep()).unwrap().is_empty());

    let f = tempfile::tempdir().unwrap();
    let short = fake_sequence(f.path(), 3, 2);
    assert!(matches!(kitti_pairs(&short, &[1], &prep()), Err(Error::Format(_))));
}

