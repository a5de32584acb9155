use core::ops::Mul;

use nalgebra::{Matrix3, Vector3, Vector6};

use super::Delta7;
use crate::math;

/// Below this rotation angle exp/log switch to their Taylor series.
const SMALL_ANGLE: f64 = 1e-8;
const SERIES_ANGLE: f64 = 1e-3;

/// Rigid transform `X ↦ R X + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Cross-product matrix: `skew(a) * b == a × b`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _) = exp_coefficients(omega.norm_squared());
    let w = skew(omega);
    Matrix3::identity() + w * a + w * w * b
}

/// Inverse of [`so3_exp`] for rotation angles in `[0, π]`.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_angle = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin_angle = 0.5 * vee.norm();
    let angle = math::atan2(sin_angle, cos_angle);
    if angle < SMALL_ANGLE {
        // R - Rᵀ = 2 [ω]x + O(|ω|³)
        return vee * 0.5;
    }
    if cos_angle > -0.99 {
        return vee * (angle / (2.0 * math::sin(angle)));
    }
    // Near π the antisymmetric part vanishes; recover the axis from R + Rᵀ,
    // using the sign of the antisymmetric part to orient it.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos_angle;
    let one_minus_cos = 1.0 - cos_angle;
    let (mut k, mut best) = (0, sym[(0, 0)]);
    for i in 1..3 {
        if sym[(i, i)] > best {
            best = sym[(i, i)];
            k = i;
        }
    }
    let mut axis = sym.column(k).into_owned() / math::sqrt(best * one_minus_cos);
    axis /= axis.norm();
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    axis * angle
}

/// `(sin a / a, (1 - cos a) / a², (a - sin a) / a³)` for `a² = angle_sq`.
fn exp_coefficients(angle_sq: f64) -> (f64, f64, f64) {
    let angle = math::sqrt(angle_sq);
    if angle < SERIES_ANGLE {
        let a4 = angle_sq * angle_sq;
        (
            1.0 - angle_sq / 6.0 + a4 / 120.0,
            0.5 - angle_sq / 24.0 + a4 / 720.0,
            1.0 / 6.0 - angle_sq / 120.0 + a4 / 5040.0,
        )
    } else {
        let (s, c) = (math::sin(angle), math::cos(angle));
        (
            s / angle,
            (1.0 - c) / angle_sq,
            (angle - s) / (angle_sq * angle),
        )
    }
}

/// Exponential map from the tangent `θ = (ω, ρ)` to SE(3).
pub fn se3_exp(theta: &Vector6<f64>) -> Pose {
    let omega = theta.fixed_rows::<3>(0).into_owned();
    let rho = theta.fixed_rows::<3>(3).into_owned();
    let (a, b, c) = exp_coefficients(omega.norm_squared());
    let w = skew(&omega);
    let w2 = w * w;
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let v = Matrix3::identity() + w * b + w2 * c;
    Pose {
        rotation,
        translation: v * rho,
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn exp(theta: &Vector6<f64>) -> Self {
        se3_exp(theta)
    }

    /// Tangent `(ω, ρ)` with `exp(log(T)) == T`.
    pub fn log(&self) -> Vector6<f64> {
        let omega = so3_log(&self.rotation);
        let angle_sq = omega.norm_squared();
        let w = skew(&omega);
        let angle = math::sqrt(angle_sq);
        let coeff = if angle < SERIES_ANGLE {
            1.0 / 12.0 + angle_sq / 720.0 + angle_sq * angle_sq / 30240.0
        } else {
            let half = 0.5 * angle;
            (1.0 - half * math::cos(half) / math::sin(half)) / angle_sq
        };
        let v_inv = Matrix3::identity() - w * 0.5 + w * w * coeff;
        let rho = v_inv * self.translation;
        Vector6::new(omega.x, omega.y, omega.z, rho.x, rho.y, rho.z)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Left-multiplicative update `exp(δ) · self`.
    pub fn boxplus(&self, delta: &Vector6<f64>) -> Self {
        se3_exp(delta) * *self
    }

    /// Homogeneous 4×4 matrix in row-major order.
    #[rustfmt::skip]
    pub fn to_row_major(&self) -> [f64; 16] {
        let (r, t) = (&self.rotation, &self.translation);
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Reads the upper 3×4 block of a row-major homogeneous matrix.
    pub fn from_row_major(m: &[f64; 16]) -> Self {
        Self {
            rotation: Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]),
            translation: Vector3::new(m[3], m[7], m[11]),
        }
    }

    /// Largest deviation of `RᵀR` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let gram = (r.transpose() * r - Matrix3::identity()).abs().max();
        gram.max(math::abs(r.determinant() - 1.0))
    }

    /// Projects the rotation back onto SO(3) (polar decomposition via SVD).
    pub fn orthonormalized(&self) -> Self {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut rot = u * vt;
        if rot.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            rot = u * vt;
        }
        Self {
            rotation: rot,
            translation: self.translation,
        }
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        *self * *rhs
    }
}

/// Parameters of one point-frame pair: pose tangent and inverse depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector {
    pub theta: Vector6<f64>,
    pub inv_depth: f64,
}

impl ParamVector {
    pub fn new(theta: Vector6<f64>, inv_depth: f64) -> Self {
        Self { theta, inv_depth }
    }

    pub fn from_pose(pose: &Pose, inv_depth: f64) -> Self {
        Self {
            theta: pose.log(),
            inv_depth,
        }
    }

    pub fn pose(&self) -> Pose {
        se3_exp(&self.theta)
    }

    /// `Δp ⊞ p`: left-multiplicative pose update, additive inverse depth.
    pub fn boxplus(&self, delta: &Delta7) -> Self {
        let dtheta = delta.fixed_rows::<6>(0).into_owned();
        if dtheta.iter().all(|v| *v == 0.0) {
            return Self {
                theta: self.theta,
                inv_depth: self.inv_depth + delta[6],
            };
        }
        Self {
            theta: self.pose().boxplus(&dtheta).log(),
            inv_depth: self.inv_depth + delta[6],
        }
    }
}
