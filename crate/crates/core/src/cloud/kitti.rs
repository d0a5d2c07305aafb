//! KITTI odometry velodyne scans, pose files and calibration.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Point3};

use super::PointCloud;
use crate::register::RigidTransform;
use crate::{Error, Result};

const RECORD: usize = 16;

pub fn parse_kitti_scan(bytes: &[u8], frame_id: impl Into<String>) -> Result<PointCloud> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::Format(format!(
            "scan length {} is not a multiple of {RECORD} bytes",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD;
    let mut points = Vec::with_capacity(n);
    let mut intensities = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let v = [f(0), f(1), f(2), f(3)];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("record {i} has non-finite values")));
        }
        points.push(Point3::new(v[0] as f64, v[1] as f64, v[2] as f64));
        intensities.push(v[3] as f64);
    }
    PointCloud::new(points, intensities, frame_id)
}

pub fn load_kitti_scan(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_kitti_scan(&bytes, id)
}

/// Serializes as 32-bit records; exact for clouds read from a scan file.
pub fn encode_kitti_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD);
    for (p, &i) in cloud.points().iter().zip(cloud.intensities()) {
        for v in [p.x, p.y, p.z, i] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_kitti_scan(cloud: &PointCloud, path: &Path) -> Result<()> {
    fs::write(path, encode_kitti_scan(cloud)).map_err(|e| Error::io(path, e))
}

/// Parses one pose line (12 numbers, row-major 3x4).
pub fn parse_pose_line(line: &str) -> Result<RigidTransform> {
    let values = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("bad number {t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != 12 {
        return Err(Error::Format(format!("pose line has {} values, expected 12", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("pose line has non-finite values".into()));
    }
    let mut m = Matrix4::identity();
    for r in 0..3 {
        for c in 0..4 {
            m[(r, c)] = values[r * 4 + c];
        }
    }
    Ok(RigidTransform::from_matrix_unchecked(m))
}

pub fn parse_kitti_poses(text: &str) -> Result<Vec<RigidTransform>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_pose_line(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn load_kitti_poses(path: &Path) -> Result<Vec<RigidTransform>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kitti_poses(&text)
}

/// C-style `%e` with six fractional digits, the layout of KITTI pose files.
pub fn format_scientific(v: f64) -> String {
    let s = format!("{v:.6e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn format_pose_line(t: &RigidTransform) -> String {
    let m = t.matrix();
    let mut parts = Vec::with_capacity(12);
    for r in 0..3 {
        for c in 0..4 {
            parts.push(format_scientific(m[(r, c)]));
        }
    }
    parts.join(" ")
}

pub fn write_kitti_poses(poses: &[RigidTransform], path: &Path) -> Result<()> {
    let mut text = String::new();
    for p in poses {
        text.push_str(&format_pose_line(p));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads the velodyne-to-camera `Tr:` entry of a sequence `calib.txt`.
pub fn load_kitti_calib(path: &Path) -> Result<RigidTransform> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .find_map(|l| l.trim().strip_prefix("Tr:"))
        .ok_or_else(|| Error::Format(format!("{} has no Tr entry", path.display())))
        .and_then(parse_pose_line)
}

/// Relative motion mapping velodyne points of scan `a` into the velodyne
/// frame of scan `b`, given camera poses `P` and calibration `Tr`:
/// `Tr^-1 P_b^-1 P_a Tr`. Projected onto a proper rotation.
pub fn relative_velodyne_motion(pose_a: &RigidTransform, pose_b: &RigidTransform, calib: &RigidTransform) -> RigidTransform {
    let pa = pose_a.orthonormalized();
    let pb = pose_b.orthonormalized();
    let tr = calib.orthonormalized();
    tr.inverse()
        .compose(&pb.inverse())
        .compose(&pa)
        .compose(&tr)
        .orthonormalized()
}

/// Standard odometry layout below a dataset root.
#[derive(Clone, Debug)]
pub struct KittiSequence {
    pub root: PathBuf,
    pub sequence: String,
}

impl KittiSequence {
    pub fn new(root: impl Into<PathBuf>, sequence: impl Into<String>) -> Self {
        KittiSequence {
            root: root.into(),
            sequence: sequence.into(),
        }
    }

    pub fn scan_dir(&self) -> PathBuf {
        self.root.join("sequences").join(&self.sequence).join("velodyne")
    }

    pub fn pose_file(&self) -> PathBuf {
        self.root.join("poses").join(format!("{}.txt", self.sequence))
    }

    pub fn calib_file(&self) -> PathBuf {
        self.root.join("sequences").join(&self.sequence).join("calib.txt")
    }

    /// Sorted scan files in the velodyne directory.
    pub fn scans(&self) -> Result<Vec<PathBuf>> {
        let dir = self.scan_dir();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        files.sort();
        Ok(files)
    }

    /// Calibration if present, identity otherwise.
    pub fn calib(&self) -> Result<RigidTransform> {
        let path = self.calib_file();
        if path.exists() {
            load_kitti_calib(&path)
        } else {
            Ok(RigidTransform::identity())
        }
    }
}
