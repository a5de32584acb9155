//! Finite-difference verification of the analytic Jacobians.

use alloc::vec::Vec;

use nalgebra::{SMatrix, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{
    fc_warp_jacobian, ic_jacobian_row, make_proxy_constants, project_warp, proxy_warp_grad_form,
    se3_exp, Delta7, Pose,
};
use crate::image::{Image, Intrinsics};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            tolerance: 1e-4,
            step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub samples: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthColumn {
    /// Zero, as it must be without translation.
    DegenerateExpected,
    /// Zero although the translation is not.
    DegenerateUnexpected,
    Observable,
}

impl DepthColumn {
    pub fn label(&self) -> &'static str {
        match self {
            DepthColumn::DegenerateExpected => "degenerate (expected)",
            DepthColumn::DegenerateUnexpected => "degenerate (UNEXPECTED)",
            DepthColumn::Observable => "observable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyRow {
    pub case: &'static str,
    pub translation_norm: f64,
    pub depth_column_norm: f64,
    pub status: DepthColumn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub checks: Vec<CheckResult>,
    pub degeneracy: Vec<DegeneracyRow>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
            && self
                .degeneracy
                .iter()
                .all(|r| r.status != DepthColumn::DegenerateUnexpected)
    }
}

/// Relative error of one column: `‖a − n‖ / max(‖a‖, ‖n‖, 1e-6)`.
pub fn relative_error(analytic: &Vector2<f64>, numeric: &Vector2<f64>) -> f64 {
    (analytic - numeric).norm() / analytic.norm().max(numeric.norm()).max(1e-6)
}

fn max_column_error(analytic: &SMatrix<f64, 2, 7>, numeric: &SMatrix<f64, 2, 7>) -> f64 {
    (0..7)
        .map(|j| {
            relative_error(
                &analytic.column(j).into_owned(),
                &numeric.column(j).into_owned(),
            )
        })
        .fold(0.0, f64::max)
}

/// Central differences of `f` along the seven parameter directions.
pub fn numeric_jacobian<F>(step: f64, f: F) -> Option<SMatrix<f64, 2, 7>>
where
    F: Fn(&Delta7) -> Option<Vector2<f64>>,
{
    let mut j = SMatrix::<f64, 2, 7>::zeros();
    for i in 0..7 {
        let mut e = Delta7::zeros();
        e[i] = step;
        let d = (f(&e)? - f(&-e)?) / (2.0 * step);
        j.set_column(i, &d);
    }
    Some(j)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn random_pose(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Pose {
    let theta = Vector6::from_fn(|i, _| {
        if i < 3 {
            uniform(rng, -rot, rot)
        } else {
            uniform(rng, -trans, trans)
        }
    });
    se3_exp(&theta)
}

/// Pose with translation norm in `[min_t, 2 min_t + 0.5]`.
pub fn random_translated_pose(rng: &mut ChaCha8Rng, min_t: f64) -> Pose {
    let mut pose = random_pose(rng, 0.3, 0.0);
    let dir = Vector3::from_fn(|_, _| uniform(rng, -1.0, 1.0));
    let dir = if dir.norm() > 1e-3 {
        dir.normalize()
    } else {
        Vector3::x()
    };
    let len = uniform(rng, min_t, 2.0 * min_t + 0.5);
    pose.translation = dir * len;
    pose
}

fn random_point(rng: &mut ChaCha8Rng) -> Vector2<f64> {
    Vector2::new(uniform(rng, -0.5, 0.5), uniform(rng, -0.4, 0.4))
}

/// Configurations closer than this to the camera plane are skipped; the
/// projection's curvature there swamps any finite-difference step.
const MIN_DEPTH: f64 = 0.2;

fn well_conditioned(pose: &Pose, x: &Vector2<f64>, d: f64) -> bool {
    let v = pose.rotation * Vector3::new(x.x, x.y, 1.0) + pose.translation * d;
    v.z >= MIN_DEPTH
}

fn summarize(name: &'static str, errors: &[f64], tolerance: f64) -> CheckResult {
    let max = errors.iter().copied().fold(0.0, f64::max);
    CheckResult {
        name,
        samples: errors.len(),
        max_rel_error: max,
        passed: !errors.is_empty() && max <= tolerance,
    }
}

/// Sweeps random configurations and compares every analytic Jacobian with
/// central differences; also tabulates the depth column when `t₀ = 0`.
pub fn run_gradcheck(config: &GradcheckConfig) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h = config.step;
    let (mut fc, mut ic, mut depth, mut grad) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    while fc.len() < config.samples {
        let x = random_point(&mut rng);
        let pose = random_pose(&mut rng, 0.3, 0.5);
        let d = uniform(&mut rng, 0.3, 2.0);
        let Ok(analytic) = fc_warp_jacobian(&x, &pose, d) else {
            continue;
        };
        if !well_conditioned(&pose, &x, d) {
            continue;
        }
        let numeric = numeric_jacobian(h, |e| {
            let th = Vector6::from_fn(|i, _| e[i]);
            project_warp(&x, &pose.boxplus(&th), d + e[6]).ok()
        });
        if let Some(numeric) = numeric {
            fc.push(max_column_error(&analytic.image, &numeric));
        }
    }
    while ic.len() < config.samples {
        let x = random_point(&mut rng);
        let pose0 = random_translated_pose(&mut rng, 0.1);
        let d0 = uniform(&mut rng, 0.3, 2.0);
        let Ok(pc) = make_proxy_constants(&x, &pose0, d0) else {
            continue;
        };
        let Ok(analytic) = ic_jacobian_row(&x, &pc) else {
            continue;
        };
        if !(pc.zbar0 * d0 >= MIN_DEPTH) {
            continue;
        }
        let Some(numeric) = numeric_jacobian(h, |dp| proxy_warp_grad_form(&x, &pc, dp).ok()) else {
            continue;
        };
        ic.push(max_column_error(&analytic.image, &numeric));
        depth.push(relative_error(
            &analytic.depth_column(),
            &numeric.column(6).into_owned(),
        ));
    }
    while grad.len() < config.samples {
        let (img, point) = random_bilinear_image(&mut rng);
        let Ok(analytic) = img.gradient(&point) else {
            continue;
        };
        let hx = h / img.intrinsics().fx;
        let hy = h / img.intrinsics().fy;
        let s = |dx: f64, dy: f64| img.sample(&(point + Vector2::new(dx, dy))).ok();
        let (Some(xp), Some(xm), Some(yp), Some(ym)) =
            (s(hx, 0.0), s(-hx, 0.0), s(0.0, hy), s(0.0, -hy))
        else {
            continue;
        };
        let numeric = Vector2::new((xp - xm) / (2.0 * hx), (yp - ym) / (2.0 * hy));
        grad.push(relative_error(&analytic, &numeric));
    }
    GradcheckReport {
        tolerance: config.tolerance,
        checks: alloc::vec![
            summarize("fc_warp_jacobian", &fc, config.tolerance),
            summarize("ic_proxy_jacobian", &ic, config.tolerance),
            summarize("ic_depth_column", &depth, config.tolerance),
            summarize("image_gradient", &grad, config.tolerance),
        ],
        degeneracy: degeneracy_table(&mut rng),
    }
}

/// Small image whose pixels follow `a + b u + c v + e u v`, which the
/// bilinear interpolant and its half-pixel differences reproduce exactly.
fn random_bilinear_image(rng: &mut ChaCha8Rng) -> (Image, Vector2<f64>) {
    let (w, hgt) = (16usize, 12usize);
    let a = uniform(rng, 0.3, 0.5);
    let b = uniform(rng, -0.01, 0.01);
    let c = uniform(rng, -0.01, 0.01);
    let e = uniform(rng, -5e-4, 5e-4);
    let k = Intrinsics::new(uniform(rng, 5.0, 20.0), uniform(rng, 5.0, 20.0), 7.5, 5.5);
    let img = Image::from_fn(w, hgt, k, |u, v| {
        let (u, v) = (u as f64, v as f64);
        a + b * u + c * v + e * u * v
    })
    .expect("coefficients keep values inside [0, 1]");
    let p = k.to_normalized(
        uniform(rng, 1.0, w as f64 - 3.0),
        uniform(rng, 1.0, hgt as f64 - 3.0),
    );
    (img, p)
}

fn degeneracy_table(rng: &mut ChaCha8Rng) -> Vec<DegeneracyRow> {
    let classify = |t: f64, col: f64| match (t == 0.0, col == 0.0) {
        (true, true) => DepthColumn::DegenerateExpected,
        (false, true) => DepthColumn::DegenerateUnexpected,
        (_, false) => DepthColumn::Observable,
    };
    let mut rows = Vec::new();
    let x = random_point(rng);
    let d = uniform(rng, 0.3, 2.0);
    let mut push = |case, pose: &Pose, col: Option<Vector2<f64>>| {
        if let Some(col) = col {
            let t = pose.translation.norm();
            rows.push(DegeneracyRow {
                case,
                translation_norm: t,
                depth_column_norm: col.norm(),
                status: classify(t, col.norm()),
            });
        }
    };
    let identity = Pose::identity();
    push(
        "fc, identity pose",
        &identity,
        fc_warp_jacobian(&x, &identity, d)
            .ok()
            .map(|j| j.depth_column()),
    );
    let rotated = random_pose(rng, 0.3, 0.0);
    push(
        "fc, pure rotation",
        &rotated,
        fc_warp_jacobian(&x, &rotated, d)
            .ok()
            .map(|j| j.depth_column()),
    );
    let ic_col = |pose: &Pose| {
        make_proxy_constants(&x, pose, d)
            .and_then(|pc| ic_jacobian_row(&x, &pc))
            .ok()
            .map(|j| j.depth_column())
    };
    push("ic, t0 = 0 (identity)", &identity, ic_col(&identity));
    push("ic, t0 = 0 (pure rotation)", &rotated, ic_col(&rotated));
    let translated = random_translated_pose(rng, 0.1);
    push("ic, |t0| >= 0.1", &translated, ic_col(&translated));
    rows
}
