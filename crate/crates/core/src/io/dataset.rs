//! Dataset directories: `manifest.json` plus one pair file per frame pair.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PairRecord;
use crate::cloud::kitti::{load_kitti_poses, load_kitti_scan, relative_velodyne_motion, KittiSequence};
use crate::cloud::{generate_synthetic_pair, prepare_pair, FramePair, PointCloud, PrepareConfig, SceneConfig};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FORMAT: &str = "pillarmatch-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic {
        seed: u64,
        scene: SceneConfig,
    },
    Kitti {
        root: PathBuf,
        sequences: Vec<String>,
        frame_distances: Vec<u32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub file: String,
    pub origin: String,
    pub frame_distance: u32,
    /// Split name such as `train` or `val`, when assigned.
    pub split: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub source: DatasetSource,
    pub prepare: PrepareConfig,
    pub pairs: Vec<PairEntry>,
}

impl DatasetManifest {
    pub fn new(source: DatasetSource, prepare: PrepareConfig) -> Self {
        DatasetManifest {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            source,
            prepare,
            pairs: Vec::new(),
        }
    }
}

/// Seed of pair `k` in a synthetic set seeded with `seed`.
pub fn pair_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64)
}

/// Generates and preprocesses `count` synthetic pairs.
pub fn synthesize_pairs(seed: u64, count: usize, scene: &SceneConfig, prepare: &PrepareConfig) -> Result<Vec<PairRecord>> {
    (0..count)
        .map(|k| {
            let s = pair_seed(seed, k);
            let pair = generate_synthetic_pair(s, scene)?;
            let prepared = prepare_pair(&pair, prepare)?;
            Ok(PairRecord::from_prepared(&prepared, prepare.z, prepare.d, format!("synthetic seed {s}")))
        })
        .collect()
}

/// Preprocesses every scan pair `(a, a + delta)` of one KITTI sequence for
/// each frame distance. Scan `a` is the source; the ground truth maps it into
/// the velodyne frame of scan `a + delta`.
pub fn kitti_pairs(seq: &KittiSequence, frame_distances: &[u32], prepare: &PrepareConfig) -> Result<Vec<PairRecord>> {
    let scans = seq.scans()?;
    let poses = load_kitti_poses(&seq.pose_file())?;
    if poses.len() < scans.len() {
        return Err(Error::Format(format!(
            "sequence {}: {} scans but only {} poses",
            seq.sequence,
            scans.len(),
            poses.len()
        )));
    }
    let calib = seq.calib()?;
    let mut cache: Vec<Option<PointCloud>> = vec![None; scans.len()];
    let mut load = |k: usize| -> Result<PointCloud> {
        if cache[k].is_none() {
            cache[k] = Some(load_kitti_scan(&scans[k])?);
        }
        Ok(cache[k].clone().expect("just loaded"))
    };
    let mut out = Vec::new();
    for &delta in frame_distances {
        if delta == 0 {
            return Err(Error::Argument("frame distance must be positive".into()));
        }
        let delta_us = delta as usize;
        if delta_us >= scans.len() {
            log::warn!("sequence {}: distance {delta} yields no pairs from {} scans", seq.sequence, scans.len());
            continue;
        }
        for a in 0..scans.len() - delta_us {
            let b = a + delta_us;
            let gt = relative_velodyne_motion(&poses[a], &poses[b], &calib);
            let pair = FramePair::new(load(a)?, load(b)?, gt, delta)?;
            let prepared = prepare_pair(&pair, prepare)?;
            let origin = format!("kitti {} {a:06}->{b:06}", seq.sequence);
            out.push(PairRecord::from_prepared(&prepared, prepare.z, prepare.d, origin));
        }
    }
    Ok(out)
}

/// Writes pair files `pair_00000.bin`, ... and the manifest into `dir`.
pub fn write_dataset(dir: &Path, mut manifest: DatasetManifest, records: &[(PairRecord, Option<String>)]) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    manifest.pairs.clear();
    for (k, (rec, split)) in records.iter().enumerate() {
        let file = format!("pair_{k:05}.bin");
        rec.save(&dir.join(&file))?;
        manifest.pairs.push(PairEntry {
            file,
            origin: rec.header.origin.clone(),
            frame_distance: rec.header.frame_distance,
            split: split.clone(),
        });
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if m.format != DATASET_FORMAT || m.version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported dataset {} v{}",
            path.display(),
            m.format,
            m.version
        )));
    }
    Ok(m)
}

/// Loads every pair, optionally restricted to one split.
pub fn load_dataset(dir: &Path, split: Option<&str>) -> Result<(DatasetManifest, Vec<PairRecord>)> {
    let manifest = read_manifest(dir)?;
    let records = manifest
        .pairs
        .iter()
        .filter(|e| split.is_none() || e.split.as_deref() == split)
        .map(|e| PairRecord::load(&dir.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, records))
}
