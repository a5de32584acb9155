use nalgebra::{Vector2, Vector3, Vector6};
use proptest::prelude::*;

use pba_core::geometry::homogeneous;
use pba_core::*;

fn twist(scale_r: f64, scale_t: f64) -> impl Strategy<Value = Vector6<f64>> {
    (
        prop::array::uniform3(-scale_r..scale_r),
        prop::array::uniform3(-scale_t..scale_t),
    )
        .prop_map(|(w, t)| Vector6::new(w[0], w[1], w[2], t[0], t[1], t[2]))
}

fn point() -> impl Strategy<Value = Vector2<f64>> {
    (-0.6..0.6, -0.45..0.45).prop_map(|(x, y)| Vector2::new(x, y))
}

/// Initial pose whose translation has norm in `[0.1, 0.5]`.
fn translated_pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-0.15..0.15),
        prop::array::uniform3(-1.0..1.0f64),
        0.1..0.5f64,
    )
        .prop_filter_map("zero direction", |(w, t, len)| {
            let dir = Vector3::new(t[0], t[1], t[2]);
            (dir.norm() > 1e-3).then(|| {
                let mut pose = so3_pose(&Vector3::new(w[0], w[1], w[2]));
                pose.translation = dir.normalize() * len;
                pose
            })
        })
}

/// Template point, translated initial pose and inverse depth, with the point
/// at least 0.2 in front of the frame.
fn config() -> impl Strategy<Value = (Vector2<f64>, Pose, f64)> {
    (point(), translated_pose(), 0.3..3.0f64)
        .prop_filter("point behind the frame", |(x, pose, d0)| {
            (pose.rotation * homogeneous(x) + pose.translation * *d0).z > 0.2
        })
}

fn so3_pose(w: &Vector3<f64>) -> Pose {
    Pose::new(so3_exp(w), Vector3::zeros())
}

/// `φ` as a function of the template point: the proxy constants belong to
/// the point being warped.
fn phi(x: &Vector2<f64>, pose0: &Pose, d0: f64, dp: &Delta7) -> Option<Vector2<f64>> {
    let pc = make_proxy_constants(x, pose0, d0).ok()?;
    proxy_warp_grad_form(x, &pc, dp).ok()
}

/// Least-squares slope of `log10 e` against `log10 s`.
fn log_log_slope(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|s| s.log10()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log10()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

proptest! {
    #[test]
    fn projection_is_scale_invariant(
        v in (prop::array::uniform2(-2.0..2.0f64), 0.1..5.0f64),
        s in 1e-3..1e3f64,
    ) {
        let v = Vector3::new(v.0[0], v.0[1], v.1);
        let a = project(&v).unwrap();
        let b = project(&(v * s)).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn identity_pose_has_an_exactly_zero_depth_column(x in point(), d in 0.05..10.0f64) {
        let j = fc_warp_jacobian(&x, &Pose::identity(), d).unwrap();
        prop_assert_eq!(j.depth_column(), Vector2::zeros());
    }

    #[test]
    fn se3_log_inverts_exp(theta in twist(1.8, 2.0)) {
        let back = se3_exp(&theta).log();
        prop_assert!((back - theta).norm() < 1e-9, "{} vs {}", back, theta);
    }

    #[test]
    fn pose_times_inverse_is_identity(theta in twist(1.8, 2.0)) {
        let p = se3_exp(&theta);
        let e = p * p.inverse();
        prop_assert!(e.log().norm() < 1e-12);
    }

    #[test]
    fn proxy_warp_is_identity_at_zero((x, pose, d0) in config()) {
        let pc = make_proxy_constants(&x, &pose, d0).unwrap();
        let g = proxy_warp_grad_form(&x, &pc, &Delta7::zeros()).unwrap();
        let u = proxy_warp_update_form(&x, &pc, &Delta7::zeros()).unwrap();
        prop_assert!((g - x).norm() < 1e-12);
        prop_assert!((u - x).norm() < 1e-12);
    }

    #[test]
    fn template_change_is_identity_at_the_initialization(
        (x, pose, d0) in config(),
    ) {
        // W'(y; p0) = W(W⁻¹(y; p0); p0), with W⁻¹ back-projecting y at the
        // proxy depth z̄0.
        let y = project_warp(&x, &pose, d0).unwrap();
        let pc = make_proxy_constants(&x, &pose, d0).unwrap();
        let back = pose.rotation.transpose() * (homogeneous(&y) * pc.zbar0 - pose.translation);
        let x_back = back.xy() / back.z;
        let d_back = 1.0 / back.z;
        let y2 = project_warp(&x_back, &pose, d_back).unwrap();
        prop_assert!((y2 - y).norm() < 1e-10);
    }

    #[test]
    fn proxy_depth_column_is_non_zero_for_translated_initializations(
        (x, pose, d0) in config(),
    ) {
        let pc = make_proxy_constants(&x, &pose, d0).unwrap();
        let internal = pc.m * (pose.rotation * homogeneous(&x) + pose.translation * d0);
        let mt0 = pc.m * pose.translation;
        prop_assume!(mt0.cross(&internal).norm() > 1e-6 * mt0.norm() * internal.norm());
        let j = ic_jacobian_row(&x, &pc).unwrap();
        prop_assert!(j.depth_column().norm() > 0.0);
    }

    #[test]
    fn proxy_inverse_is_first_order(
        (x, pose, d0) in config(),
        dir in prop::array::uniform7(-1.0..1.0f64),
    ) {
        let dir = Delta7::from_column_slice(&dir);
        prop_assume!(dir.norm() > 0.1);
        let dir = dir.normalize();
        let steps = [1e-2, 1e-3, 1e-4];
        let mut errors = Vec::new();
        for s in steps {
            let dp = dir * s;
            let y = phi(&x, &pose, d0, &dp).unwrap();
            errors.push((phi(&y, &pose, d0, &(-dp)).unwrap() - x).norm());
        }
        prop_assume!(errors.iter().all(|e| *e > 1e-14));
        let slope = log_log_slope(&steps, &errors);
        prop_assert!((slope - 2.0).abs() <= 0.1, "slope {} errors {:?}", slope, errors);
    }

    #[test]
    fn ic_update_with_zero_step_keeps_the_warp(
        (x, pose, d0) in config(),
    ) {
        let pc = make_proxy_constants(&x, &pose, d0).unwrap();
        let (p, d) = apply_ic_update(&pose, d0, &pc, &Delta7::zeros()).unwrap();
        prop_assert!((p.rotation - pose.rotation).norm() < 1e-15);
        prop_assert!((p.translation - pose.translation).norm() < 1e-15);
        prop_assert_eq!(d, d0);
    }
}
