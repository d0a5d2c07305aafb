use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for orthonormality and determinant checks.
pub const RIGID_TOLERANCE: f64 = 1e-9;

/// 4x4 homogeneous rigid transform `[R t; 0 1]`.
///
/// Constructors that take a raw matrix do not validate it; call
/// [`RigidTransform::validate`] where a proper rotation is required. Poses
/// read from text files carry only ~7 significant digits and are generally
/// not orthonormal to 1e-9.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 16]", from = "[f64; 16]")]
pub struct RigidTransform(Matrix4<f64>);

impl From<RigidTransform> for [f64; 16] {
    /// Row-major.
    fn from(t: RigidTransform) -> Self {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = t.0[(r, c)];
            }
        }
        out
    }
}

impl From<[f64; 16]> for RigidTransform {
    fn from(v: [f64; 16]) -> Self {
        RigidTransform(Matrix4::from_row_slice(&v))
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform(Matrix4::identity())
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        RigidTransform(m)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), t)
    }

    /// Rotation by `angle` radians about `axis` (need not be unit), then translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let r = if axis.norm() == 0.0 || angle == 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
        };
        Self::from_parts(r, translation)
    }

    /// Wraps a raw matrix without validation; the bottom row is forced to (0,0,0,1).
    pub fn from_matrix_unchecked(mut m: Matrix4<f64>) -> Self {
        m[(3, 0)] = 0.0;
        m[(3, 1)] = 0.0;
        m[(3, 2)] = 0.0;
        m[(3, 3)] = 1.0;
        RigidTransform(m)
    }

    /// Wraps a raw matrix, rejecting anything that is not a proper rigid motion.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Argument(format!(
                "bottom row must be (0,0,0,1), got {bottom:?}"
            )));
        }
        let t = RigidTransform(m);
        t.validate()?;
        Ok(t)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Checks finiteness, `R^T R = I` and `det R = +1` within [`RIGID_TOLERANCE`].
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("transform has non-finite entries".into()));
        }
        let r = self.rotation();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho > RIGID_TOLERANCE {
            return Err(Error::Argument(format!(
                "rotation block is not orthonormal (max |R^T R - I| = {ortho:e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > RIGID_TOLERANCE {
            return Err(Error::Argument(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Projects the rotation block onto the nearest proper rotation.
    pub fn orthonormalized(&self) -> Self {
        let svd = self.rotation().svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Self::from_parts(u * d * v_t, self.translation())
    }

    /// Closed-form inverse `[R^T, -R^T t]`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        Self::from_parts(rt, -(rt * self.translation()))
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform::from_matrix_unchecked(self.0 * other.0)
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation() * p.coords + self.translation())
    }

    pub fn apply_all(&self, points: &[Point3<f64>]) -> Vec<Point3<f64>> {
        let (r, t) = (self.rotation(), self.translation());
        points.iter().map(|p| Point3::from(r * p.coords + t)).collect()
    }

    /// Rotation angle in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation())
    }
}

/// Angle of a rotation matrix in `[0, pi]`.
///
/// Evaluated as `atan2(|sin|, cos)` with `cos = (tr R - 1) / 2` and `|sin|`
/// from the skew part. This equals `arccos(clamp(cos, -1, 1))` but keeps full
/// precision near 0 and pi, where arccos loses about half the digits.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let cos = 0.5 * (r.trace() - 1.0);
    let skew = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin = 0.5 * skew.norm();
    sin.atan2(cos.clamp(-1.0, 1.0))
}
