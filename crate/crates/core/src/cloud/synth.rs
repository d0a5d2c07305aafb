//! Seeded synthetic street scenes for training without recorded scans.
//!
//! The world is a street segment around the sensor: ground, stepped building
//! facades, box-shaped obstacles and poles. The source scan sees the window
//! `x in [-L/2, L/2]`; the target sees the same window shifted forward so that
//! the requested fraction overlaps, then expressed in the target frame by the
//! sampled rigid motion. Intensity belongs to the world point, so both scans
//! agree on it.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FramePair, PointCloud};
use crate::register::RigidTransform;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Approximate number of points per scan.
    pub points: usize,
    /// Fraction of the source window also visible in the target, in (0, 1].
    pub overlap: f64,
    /// Largest rotation angle (radians).
    pub rotation_bound: f64,
    /// Largest translation norm (meters).
    pub translation_bound: f64,
    /// Per-coordinate Gaussian noise (meters), drawn independently per scan.
    pub noise_sigma: f64,
    /// Length of the visible window along the street (meters).
    pub window: f64,
    /// Half width of the street between facades (meters).
    pub half_width: f64,
    pub frame_distance: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            points: 4000,
            overlap: 1.0,
            rotation_bound: 10f64.to_radians(),
            translation_bound: 1.0,
            noise_sigma: 0.0,
            window: 30.0,
            half_width: 8.0,
            frame_distance: 1,
        }
    }
}

const GROUND_Z: f64 = -1.7;

#[derive(Clone, Debug)]
enum Shape {
    /// `origin + a*u + b*v` for `a, b in [0, 1]`.
    Rect { origin: Point3<f64>, u: Vector3<f64>, v: Vector3<f64> },
    /// Lateral surface of a vertical cylinder.
    Cylinder { base: Point3<f64>, radius: f64, height: f64 },
}

#[derive(Clone, Debug)]
struct Surface {
    shape: Shape,
    reflectance: f64,
}

impl Surface {
    fn area(&self) -> f64 {
        match &self.shape {
            Shape::Rect { u, v, .. } => u.cross(v).norm(),
            Shape::Cylinder { radius, height, .. } => 2.0 * std::f64::consts::PI * radius * height,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3<f64> {
        match &self.shape {
            Shape::Rect { origin, u, v } => {
                let (a, b): (f64, f64) = (rng.random(), rng.random());
                origin + u * a + v * b
            }
            Shape::Cylinder { base, radius, height } => {
                let phi = rng.random::<f64>() * std::f64::consts::TAU;
                let h = rng.random::<f64>() * height;
                base + Vector3::new(radius * phi.cos(), radius * phi.sin(), h)
            }
        }
    }
}

fn rect(origin: Point3<f64>, u: Vector3<f64>, v: Vector3<f64>, reflectance: f64) -> Surface {
    Surface {
        shape: Shape::Rect { origin, u, v },
        reflectance,
    }
}

fn build_scene(rng: &mut ChaCha8Rng, x0: f64, x1: f64, half_width: f64) -> Vec<Surface> {
    let mut s = Vec::new();
    let refl = |rng: &mut ChaCha8Rng| rng.random_range(0.05..0.95);
    let height = 6.0;

    let r = refl(rng);
    s.push(rect(
        Point3::new(x0, -half_width, GROUND_Z),
        Vector3::new(x1 - x0, 0.0, 0.0),
        Vector3::new(0.0, 2.0 * half_width, 0.0),
        r,
    ));

    // Facades: segments with random setbacks joined by perpendicular returns.
    for side in [-1.0, 1.0] {
        let mut x = x0;
        let mut prev_depth: Option<f64> = None;
        while x < x1 {
            let len = rng.random_range(3.0..8.0f64).min(x1 - x);
            let depth = rng.random_range(0.0..1.2);
            let y = side * (half_width + depth);
            let r = refl(rng);
            s.push(rect(
                Point3::new(x, y, GROUND_Z),
                Vector3::new(len, 0.0, 0.0),
                Vector3::new(0.0, 0.0, height),
                r,
            ));
            if let Some(pd) = prev_depth {
                let y_prev = side * (half_width + pd);
                s.push(rect(
                    Point3::new(x, y_prev, GROUND_Z),
                    Vector3::new(0.0, y - y_prev, 0.0),
                    Vector3::new(0.0, 0.0, height),
                    r,
                ));
            }
            prev_depth = Some(depth);
            x += len;
        }
    }

    // Boxes standing on the ground.
    let boxes = ((x1 - x0) / 4.0).ceil() as usize;
    for _ in 0..boxes {
        let (l, w, h) = (
            rng.random_range(1.5..4.5),
            rng.random_range(1.2..2.0),
            rng.random_range(0.8..1.8),
        );
        let yaw: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let cx = rng.random_range(x0..x1);
        let cy = rng.random_range(-half_width + 1.5..half_width - 1.5);
        if (cx * cx + cy * cy).sqrt() < 3.5 {
            continue;
        }
        let ex = Vector3::new(yaw.cos(), yaw.sin(), 0.0) * l;
        let ey = Vector3::new(-yaw.sin(), yaw.cos(), 0.0) * w;
        let ez = Vector3::new(0.0, 0.0, h);
        let corner = Point3::new(cx, cy, GROUND_Z) - ex * 0.5 - ey * 0.5;
        let r = refl(rng);
        s.push(rect(corner + ez, ex, ey, r));
        s.push(rect(corner, ex, ez, r));
        s.push(rect(corner + ey, ex, ez, r));
        s.push(rect(corner, ey, ez, r));
        s.push(rect(corner + ex, ey, ez, r));
    }

    // Poles along the facades.
    let poles = ((x1 - x0) / 5.0).ceil() as usize;
    for _ in 0..poles {
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let base = Point3::new(
            rng.random_range(x0..x1),
            side * rng.random_range(half_width - 2.0..half_width - 0.5),
            GROUND_Z,
        );
        s.push(Surface {
            shape: Shape::Cylinder {
                base,
                radius: rng.random_range(0.08..0.25),
                height: rng.random_range(3.0..5.0),
            },
            reflectance: refl(rng),
        });
    }
    s
}

fn sample_transform(rng: &mut ChaCha8Rng, rotation_bound: f64, translation_bound: f64) -> RigidTransform {
    // Yaw-dominant axis, as for a ground vehicle.
    let axis = Vector3::new(rng.random_range(-0.1..=0.1), rng.random_range(-0.1..=0.1), 1.0);
    let angle = rng.random::<f64>() * rotation_bound * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let dir = Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        0.2 * Distribution::<f64>::sample(&StandardNormal, rng),
    );
    let mag = rng.random::<f64>() * translation_bound;
    let t = if dir.norm() > 0.0 { dir.normalize() * mag } else { Vector3::zeros() };
    RigidTransform::from_axis_angle(axis, angle, t)
}

pub fn generate_synthetic_pair(seed: u64, config: &SceneConfig) -> Result<FramePair> {
    if !(config.overlap > 0.0 && config.overlap <= 1.0) {
        return Err(Error::Argument(format!("overlap must lie in (0, 1], got {}", config.overlap)));
    }
    if !(config.rotation_bound >= 0.0 && config.translation_bound >= 0.0 && config.noise_sigma >= 0.0) {
        return Err(Error::Argument("bounds and noise must be non-negative".into()));
    }
    if !(config.window > 0.0 && config.half_width > 2.0) {
        return Err(Error::Argument("window must be positive and half width above 2 m".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = (1.0 - config.overlap) * config.window;
    let (lo, hi) = (-0.5 * config.window, 0.5 * config.window);
    let surfaces = build_scene(&mut rng, lo, hi + shift, config.half_width);
    let gt = sample_transform(&mut rng, config.rotation_bound, config.translation_bound);

    let areas: Vec<f64> = surfaces.iter().map(Surface::area).collect();
    let total: f64 = areas.iter().sum();
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a / total;
        cumulative.push(acc);
    }
    let world_count = (config.points as f64 * (config.window + shift) / config.window).round() as usize;

    let noise = (config.noise_sigma > 0.0).then(|| Normal::new(0.0, config.noise_sigma).expect("valid sigma"));
    let jitter = |rng: &mut ChaCha8Rng, p: Point3<f64>| match &noise {
        Some(n) => p + Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)),
        None => p,
    };

    let (mut src_pts, mut src_int, mut tgt_pts, mut tgt_int) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..world_count {
        let u: f64 = rng.random();
        let k = cumulative.partition_point(|&c| c < u).min(surfaces.len() - 1);
        let p = surfaces[k].sample(&mut rng);
        let intensity = (surfaces[k].reflectance + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
        if p.x >= lo && p.x <= hi {
            let q = jitter(&mut rng, p);
            src_pts.push(q);
            src_int.push(intensity);
        }
        if p.x >= lo + shift && p.x <= hi + shift {
            let q = jitter(&mut rng, gt.apply(&p));
            tgt_pts.push(q);
            tgt_int.push(intensity);
        }
    }
    let source = PointCloud::new(src_pts, src_int, format!("synthetic-{seed}-source"))?;
    let target = PointCloud::new(tgt_pts, tgt_int, format!("synthetic-{seed}-target"))?;
    FramePair::new(source, target, gt, config.frame_distance)
}
