use nalgebra::{Matrix3, Point3, Vector3};

use super::RigidTransform;
use crate::{Error, Result};

/// Relative singular-value floor below which the cross-covariance is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares rigid transform mapping `src[k]` onto `tgt[k]` (Kabsch).
pub fn estimate_transform_svd(src: &[Point3<f64>], tgt: &[Point3<f64>]) -> Result<RigidTransform> {
    if src.len() != tgt.len() {
        return Err(Error::Argument(format!(
            "{} source points but {} target points",
            src.len(),
            tgt.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::InsufficientCorrespondences(src.len()));
    }
    let inv = 1.0 / src.len() as f64;
    let cs: Vector3<f64> = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() * inv;
    let ct: Vector3<f64> = tgt.iter().map(|p| p.coords).sum::<Vector3<f64>>() * inv;
    let mut h = Matrix3::zeros();
    for (s, t) in src.iter().zip(tgt) {
        h += (s.coords - cs) * (t.coords - ct).transpose();
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite cross-covariance".into()));
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] == 0.0 || sv[1] <= RANK_TOLERANCE * sv[0] {
        return Err(Error::DegenerateGeometry(format!(
            "cross-covariance rank below 2 (singular values {sv:?})"
        )));
    }
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    let t = ct - r * cs;
    Ok(RigidTransform::from_parts(r, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn pts(v: &[[f64; 3]]) -> Vec<Point3<f64>> {
        v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
    }

    #[test]
    fn identity_for_equal_sets() {
        let p = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let t = estimate_transform_svd(&p, &p).unwrap();
        assert!((t.matrix() - nalgebra::Matrix4::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn recovers_quarter_turn_and_shift() {
        let src = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.5, 0.5, 3.0]]);
        let truth = RigidTransform::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::new(1.0, 2.0, 3.0));
        let tgt = truth.apply_all(&src);
        let est = estimate_transform_svd(&src, &tgt).unwrap();
        assert!((est.matrix() - truth.matrix()).abs().max() < 1e-9);
        est.validate().unwrap();
    }

    #[test]
    fn too_few_pairs() {
        let p = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(matches!(estimate_transform_svd(&p, &p), Err(Error::InsufficientCorrespondences(2))));
    }

    #[test]
    fn collinear_is_degenerate() {
        let p = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        assert!(matches!(estimate_transform_svd(&p, &p), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn planar_input_avoids_reflection() {
        let src = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        let truth = RigidTransform::from_axis_angle(Vector3::new(1.0, 1.0, 0.0), 2.5, Vector3::zeros());
        let est = estimate_transform_svd(&src, &truth.apply_all(&src)).unwrap();
        est.validate().unwrap();
        assert!((est.matrix() - truth.matrix()).abs().max() < 1e-9);
    }
}
