//! The proxy warp `φ` used by the inverse compositional solver.
//!
//! Instead of linearizing the warp on the reference image (where, at zero
//! translation, the inverse depth has no effect on the projection), the
//! warp's identity is moved to the initial parameters `p⁰ = (R₀, t₀, d₀)`.
//! For a template point `x`, `φ(x; Δp)` warps `x` into the frame with the
//! incremented parameters `R' = ΔR R₀`, `t' = t₀ + Δt`, `d' = d₀ + Δd` and
//! back into the reference through the inverse of `W(·; p⁰)`, so that
//! `φ(x; 0) = x`.
//!
//! Two algebraically related forms are provided. The gradient form is exact
//! and has a constant 3×3 prefactor `M`, which makes its derivatives simple.
//! The update form drops the ratio of proxy depths, so the two forms agree
//! only at `Δp = 0`; it is the one used to read off parameter updates.
//!
//! Template points always enter as homogeneous `x̃ = (x, y, 1)`, matching
//! the projective warp.

use nalgebra::{Matrix3, SMatrix, Vector2, Vector3};

use super::warp::{homogeneous, project_front, project_jacobian};
use super::{skew, so3_exp, Delta7, Pose, WarpJacobian, DEPTH_EPSILON};
use crate::{Error, Result};

/// Constants of the proxy linearization for one template point and frame,
/// frozen at the initial parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyConstants {
    pub r0: Matrix3<f64>,
    pub t0: Vector3<f64>,
    pub d0: f64,
    /// Depth of the template point in the frame under `p⁰`, in scene units:
    /// `[R₀ x̃ + d₀ t₀]_z / d₀`.
    pub zbar0: f64,
    /// `R₀ᵀ (z̄₀ I − [0 0 t₀])`.
    pub m: Matrix3<f64>,
}

/// Freezes the proxy constants for template point `x` at `(pose0, d0)`.
pub fn make_proxy_constants(x: &Vector2<f64>, pose0: &Pose, d0: f64) -> Result<ProxyConstants> {
    if !(d0 > 0.0) {
        return Err(Error::InvalidDepth { value: d0 });
    }
    let (r0, t0) = (pose0.rotation, pose0.translation);
    let u = r0 * homogeneous(x) + t0 * d0;
    if !(u.z > DEPTH_EPSILON) {
        return Err(Error::DegenerateDepth { depth: u.z });
    }
    let zbar0 = u.z / d0;
    let mut inner = Matrix3::identity() * zbar0;
    let mut col = inner.column_mut(2);
    col -= t0;
    Ok(ProxyConstants {
        r0,
        t0,
        d0,
        zbar0,
        m: r0.transpose() * inner,
    })
}

/// `R' x̃ + d' t'` for the incremented parameters.
fn incremented_point(x: &Vector2<f64>, pc: &ProxyConstants, dp: &Delta7) -> Vector3<f64> {
    let omega = Vector3::new(dp[0], dp[1], dp[2]);
    let dt = Vector3::new(dp[3], dp[4], dp[5]);
    so3_exp(&omega) * pc.r0 * homogeneous(x) + (pc.t0 + dt) * (pc.d0 + dp[6])
}

/// Internal transform `φ*(x; Δp) = M (R' x̃ + d' t')`, before projection.
pub(crate) fn proxy_point(x: &Vector2<f64>, pc: &ProxyConstants, dp: &Delta7) -> Vector3<f64> {
    pc.m * incremented_point(x, pc, dp)
}

/// Gradient form `φ(x; Δp) = ⟨M (R' x̃ + d' t')⟩`. Exact.
pub fn proxy_warp_grad_form(
    x: &Vector2<f64>,
    pc: &ProxyConstants,
    dp: &Delta7,
) -> Result<Vector2<f64>> {
    project_front(&proxy_point(x, pc, dp))
}

/// Update form `φ(x; Δp) ≈ ⟨R₀ᵀ (R' x̃ / d' + Δt)⟩`.
///
/// Agrees with the gradient form at `Δp = 0`; the gap grows linearly in `Δp`.
pub fn proxy_warp_update_form(
    x: &Vector2<f64>,
    pc: &ProxyConstants,
    dp: &Delta7,
) -> Result<Vector2<f64>> {
    let d = pc.d0 + dp[6];
    if !(d > 0.0) {
        return Err(Error::InvalidDepth { value: d });
    }
    let omega = Vector3::new(dp[0], dp[1], dp[2]);
    let dt = Vector3::new(dp[3], dp[4], dp[5]);
    let v = pc.r0.transpose() * (so3_exp(&omega) * pc.r0 * homogeneous(x) / d + dt);
    project_front(&v)
}

/// Analytic `∂φ/∂Δp` at `Δp = 0`.
///
/// `∂φ*/∂ω = −M [R₀ x̃]x`, `∂φ*/∂Δt = d₀ M`, `∂φ*/∂Δd = M t₀`, each pushed
/// through the projection quotient rule. The inverse-depth column is
/// non-zero whenever `t₀ ≠ 0` and `M t₀` is not parallel to `φ*(x; 0)`.
pub fn ic_jacobian_row(x: &Vector2<f64>, pc: &ProxyConstants) -> Result<WarpJacobian> {
    let rx = pc.r0 * homogeneous(x);
    let v = pc.m * (rx + pc.t0 * pc.d0);
    if !(v.z > DEPTH_EPSILON) {
        return Err(Error::DegenerateDepth { depth: v.z });
    }
    let mut point = SMatrix::<f64, 3, 7>::zeros();
    point
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-(pc.m * skew(&rx))));
    point
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(pc.m * pc.d0));
    point.set_column(6, &(pc.m * pc.t0));
    Ok(WarpJacobian {
        image: project_jacobian(&v) * point,
        point,
    })
}

/// Photometric row `gᵀ ∂φ/∂Δp` for a template point with reference image
/// gradient `g`, equal to `gᵀ · ic_jacobian_row(x, pc).image` without
/// forming `M`.
///
/// At `Δp = 0` the internal point is `z̄₀ x̃`, so the projection Jacobian is
/// `[I | −x] / z̄₀` and `gᵀ` pulls back to `b = Mᵀ a` with
/// `a = (g, −g·x) / z̄₀`.
pub fn ic_photometric_row(
    x: &Vector2<f64>,
    gradient: &Vector2<f64>,
    pose0: &Pose,
    d0: f64,
) -> Result<Delta7> {
    if !(d0 > 0.0) {
        return Err(Error::InvalidDepth { value: d0 });
    }
    let (r0, t0) = (&pose0.rotation, &pose0.translation);
    let rx = r0 * homogeneous(x);
    let z = rx.z + d0 * t0.z;
    if !(z > DEPTH_EPSILON) {
        return Err(Error::DegenerateDepth { depth: z });
    }
    let zbar0 = z / d0;
    let c = r0 * Vector3::new(gradient.x, gradient.y, -gradient.dot(x));
    let mut b = c;
    b.z -= t0.dot(&c) / zbar0;
    let w = rx.cross(&b);
    Ok(Delta7::from_column_slice(&[
        w.x,
        w.y,
        w.z,
        d0 * b.x,
        d0 * b.y,
        d0 * b.z,
        b.dot(t0),
    ]))
}

/// Pose part of the inverse compositional update:
/// `R ← R R₀ᵀ ΔRᵀ R₀`, `t ← t − R R₀ᵀ Δt`.
pub fn ic_pose_update(
    pose: &Pose,
    r0: &Matrix3<f64>,
    omega: &Vector3<f64>,
    dt: &Vector3<f64>,
) -> Pose {
    let rr0t = pose.rotation * r0.transpose();
    Pose {
        rotation: rr0t * so3_exp(omega).transpose() * r0,
        translation: pose.translation - rr0t * dt,
    }
}

/// Inverse-depth part of the update: `d ← (d₀ − Δd) / d₀ · d`.
pub fn ic_depth_update(inv_depth: f64, d0: f64, delta_d: f64) -> Result<f64> {
    let d = (d0 - delta_d) / d0 * inv_depth;
    if !(d > 0.0) {
        return Err(Error::InvalidDepth { value: d });
    }
    Ok(d)
}

/// Composes the current warp with the first-order inverse `φ(x; −Δp)` and
/// reads off the new pose and inverse depth.
pub fn apply_ic_update(
    pose: &Pose,
    inv_depth: f64,
    pc: &ProxyConstants,
    dp: &Delta7,
) -> Result<(Pose, f64)> {
    let omega = Vector3::new(dp[0], dp[1], dp[2]);
    let dt = Vector3::new(dp[3], dp[4], dp[5]);
    let d = ic_depth_update(inv_depth, pc.d0, dp[6])?;
    Ok((ic_pose_update(pose, &pc.r0, &omega, &dt), d))
}
