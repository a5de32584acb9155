//! Photometric bundle adjustment by direct intensity alignment.
//!
//! Camera poses (SE(3)) and per-point inverse depths are refined jointly by
//! minimizing Huber-robustified intensity residuals between a reference image
//! and a set of target images. Two solvers are provided:
//!
//! * [`solver::fc_solve`], a forwards compositional Gauss-Newton baseline that
//!   relinearizes and rebuilds the Hessian every iteration, and
//! * [`solver::ic_solve`], an inverse compositional solver that linearizes once
//!   about a *proxy template*: the reference warped through the initial
//!   parameters. Moving the identity of the warp away from zero translation is
//!   what makes the inverse-depth derivative observable, so the Jacobian and
//!   Hessian can be built and factorized a single time.
//!
//! The crate is `no_std` (with `alloc`). The `std` feature adds a wall clock
//! and the `parallel` feature evaluates residuals and renders images with
//! rayon; reductions always run in a fixed order, so results do not depend on
//! the thread count.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;
pub mod geometry;
pub mod gradcheck;
pub mod image;
mod math;
pub mod metrics;
mod par;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    apply_ic_update, fc_warp_jacobian, ic_jacobian_row, make_proxy_constants, project,
    project_warp, proxy_warp_grad_form, proxy_warp_update_form, se3_exp, so3_exp, Delta7,
    ParamVector, Pose, ProxyConstants, WarpJacobian, DEPTH_EPSILON,
};
pub use image::{image_gradient, sample_bilinear, Image, Intrinsics, PatchPattern};
pub use solver::{
    energy_eval, fc_solve, huber_weight, ic_solve, Clock, HuberLoss, NoClock, ProblemState,
    SolveReport, SolveStatus, SolverConfig,
};

#[cfg(feature = "std")]
pub use solver::StdClock;
