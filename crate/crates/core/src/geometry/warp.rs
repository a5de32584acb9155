use nalgebra::{Matrix2x3, SMatrix, Vector2, Vector3};

use super::{skew, Pose, WarpJacobian, DEPTH_EPSILON};
use crate::{Error, Result};

#[inline]
pub fn homogeneous(x: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(x.x, x.y, 1.0)
}

/// `⟨v⟩ = (v_x / v_z, v_y / v_z)`.
pub fn project(v: &Vector3<f64>) -> Result<Vector2<f64>> {
    if !(v.z.abs() >= DEPTH_EPSILON) {
        return Err(Error::DegenerateDepth { depth: v.z });
    }
    Ok(Vector2::new(v.x / v.z, v.y / v.z))
}

/// Quotient-rule derivative of `⟨v⟩` with respect to `v`.
pub fn project_jacobian(v: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / v.z;
    let iz2 = iz * iz;
    Matrix2x3::new(iz, 0.0, -v.x * iz2, 0.0, iz, -v.y * iz2)
}

/// Projection that additionally rejects points behind the camera.
pub(crate) fn project_front(v: &Vector3<f64>) -> Result<Vector2<f64>> {
    if !(v.z > DEPTH_EPSILON) {
        return Err(Error::DegenerateDepth { depth: v.z });
    }
    Ok(Vector2::new(v.x / v.z, v.y / v.z))
}

/// `W(x; p) = ⟨R x̃ + d t⟩`: template point `x` with inverse depth `d` seen from `pose`.
pub fn project_warp(x: &Vector2<f64>, pose: &Pose, inv_depth: f64) -> Result<Vector2<f64>> {
    project_front(&(pose.rotation * homogeneous(x) + pose.translation * inv_depth))
}

/// Jacobian of [`project_warp`] for the left-multiplicative update
/// `exp(δθ) · pose` and the additive update `d + δd`, at `δ = 0`.
///
/// With `v = R x̃ + d t`, the pre-projection derivatives are `-[v]x` (rotation),
/// `d I` (translation) and `t` (inverse depth). At the identity pose `t = 0`,
/// so the inverse-depth column vanishes for every `x` and `d`.
pub fn fc_warp_jacobian(x: &Vector2<f64>, pose: &Pose, inv_depth: f64) -> Result<WarpJacobian> {
    let v = pose.rotation * homogeneous(x) + pose.translation * inv_depth;
    if !(v.z > DEPTH_EPSILON) {
        return Err(Error::DegenerateDepth { depth: v.z });
    }
    let mut point = SMatrix::<f64, 3, 7>::zeros();
    point.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&v)));
    point
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(nalgebra::Matrix3::identity() * inv_depth));
    point.set_column(6, &pose.translation);
    Ok(WarpJacobian {
        image: project_jacobian(&v) * point,
        point,
    })
}
