//! Gauge-aligned parameter errors against ground truth.

use crate::math::sqrt;
use crate::solver::Params;

/// Root-mean-square errors per component.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamErrors {
    pub rotation: f64,
    pub translation: f64,
    pub inv_depth: f64,
}

impl ParamErrors {
    pub fn max(&self) -> f64 {
        self.rotation.max(self.translation).max(self.inv_depth)
    }
}

/// Compares `estimate` with `truth` after normalizing both to unit mean
/// inverse depth. Pose errors are the rotation and translation parts of
/// `log(T_est · T_gt⁻¹)`.
pub fn param_errors(estimate: &Params, truth: &Params) -> ParamErrors {
    let (mut est, mut gt) = (estimate.clone(), truth.clone());
    est.normalize_scale();
    gt.normalize_scale();
    let (mut rot, mut trans) = (0.0, 0.0);
    for (e, g) in est.poses.iter().zip(&gt.poses) {
        let xi = (e * &g.inverse()).log();
        rot += xi.fixed_rows::<3>(0).norm_squared();
        trans += xi.fixed_rows::<3>(3).norm_squared();
    }
    let components = 3.0 * est.poses.len().max(1) as f64;
    let idepth: f64 = est
        .inv_depths
        .iter()
        .zip(&gt.inv_depths)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    ParamErrors {
        rotation: sqrt(rot / components),
        translation: sqrt(trans / components),
        inv_depth: sqrt(idepth / est.inv_depths.len().max(1) as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, Pose};
    use alloc::vec;
    use nalgebra::{Vector3, Vector6};

    #[test]
    fn identical_parameters_have_zero_error() {
        let p = Params {
            poses: vec![se3_exp(&Vector6::new(0.1, 0.0, -0.2, 0.3, 0.1, 0.0))],
            inv_depths: vec![0.5, 1.5],
        };
        assert!(param_errors(&p, &p).max() < 1e-15);
    }

    #[test]
    fn scale_is_factored_out() {
        let truth = Params {
            poses: vec![Pose::from_translation(Vector3::new(0.2, 0.0, 0.0))],
            inv_depths: vec![1.0, 2.0],
        };
        let scaled = Params {
            poses: vec![Pose::from_translation(Vector3::new(0.1, 0.0, 0.0))],
            inv_depths: vec![2.0, 4.0],
        };
        assert!(param_errors(&scaled, &truth).max() < 1e-15);
    }

    #[test]
    fn translation_error_is_per_component_rms() {
        let truth = Params {
            poses: vec![Pose::identity(), Pose::identity()],
            inv_depths: vec![1.0],
        };
        let est = Params {
            poses: vec![
                Pose::from_translation(Vector3::new(0.3, 0.0, 0.0)),
                Pose::identity(),
            ],
            inv_depths: vec![1.0],
        };
        let e = param_errors(&est, &truth);
        assert!((e.translation - sqrt(0.09 / 6.0)).abs() < 1e-15);
        assert_eq!(e.rotation, 0.0);
    }
}
