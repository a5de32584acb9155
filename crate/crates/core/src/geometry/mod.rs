//! Rigid-body arithmetic, the projective warp and its Jacobians.
//!
//! Points in the reference image are given in normalized image coordinates
//! `x = (x, y)`; `x̃ = (x, y, 1)`. A point with inverse depth `d` is warped
//! into a frame with pose `(R, t)` by `W(x; p) = ⟨R x̃ + d t⟩`, where `⟨·⟩`
//! divides by the third component.
//!
//! Pose tangents are ordered rotation first: `θ = (ω, ρ)`.

mod proxy;
mod se3;
mod warp;

pub use proxy::{
    apply_ic_update, ic_depth_update, ic_jacobian_row, ic_photometric_row, ic_pose_update,
    make_proxy_constants, proxy_warp_grad_form, proxy_warp_update_form, ProxyConstants,
};
pub use se3::{se3_exp, skew, so3_exp, so3_log, ParamVector, Pose};
pub use warp::{fc_warp_jacobian, homogeneous, project, project_jacobian, project_warp};

use nalgebra::{SMatrix, SVector};

/// Depths with magnitude below this (normalized units) are treated as lying
/// on the camera plane.
pub const DEPTH_EPSILON: f64 = 1e-12;

/// A parameter increment for one point-frame pair: `(ω, Δt, Δd)`.
pub type Delta7 = SVector<f64, 7>;

/// Derivative of a warped image point with respect to `(ω, Δt, Δd)`.
///
/// `point` is the derivative of the 3-vector before projection, `image` the
/// derivative after the projection quotient rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpJacobian {
    pub image: SMatrix<f64, 2, 7>,
    pub point: SMatrix<f64, 3, 7>,
}

impl WarpJacobian {
    /// Column of the image-point derivative for the inverse depth.
    pub fn depth_column(&self) -> nalgebra::Vector2<f64> {
        self.image.column(6).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.image
            .iter()
            .chain(self.point.iter())
            .all(|v| v.is_finite())
    }
}
