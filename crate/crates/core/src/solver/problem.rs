//! Problem layout and residual evaluation shared by both solvers.
//!
//! Residuals are indexed `((f · N) + n) · K + k` for target frame `f`, point
//! `n` and patch offset `k`, so each point-frame pair owns a contiguous run of
//! `K` entries.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Vector2, Vector3};

use super::HuberLoss;
use crate::geometry::{homogeneous, Pose, DEPTH_EPSILON};
use crate::image::{Image, PatchPattern};
use crate::par;
use crate::{Error, Result};

/// Reference image, target frames, and the parameters being refined.
///
/// `poses[f]` maps reference-camera coordinates into target frame `f`; the
/// reference camera is the identity and is not a parameter. Anchors are pixel
/// coordinates in the reference image.
#[derive(Debug, Clone)]
pub struct ProblemState {
    pub reference: Image,
    pub targets: Vec<Image>,
    pub poses: Vec<Pose>,
    pub inv_depths: Vec<f64>,
    pub anchors: Vec<Vector2<f64>>,
    pub pattern: PatchPattern,
}

impl ProblemState {
    pub fn new(
        reference: Image,
        targets: Vec<Image>,
        poses: Vec<Pose>,
        inv_depths: Vec<f64>,
        anchors: Vec<Vector2<f64>>,
        pattern: PatchPattern,
    ) -> Result<Self> {
        let state = Self {
            reference,
            targets,
            poses,
            inv_depths,
            anchors,
            pattern,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidProblem(
                "at least one target frame is required",
            ));
        }
        if self.poses.len() != self.targets.len() {
            return Err(Error::InvalidProblem(
                "one pose per target frame is required",
            ));
        }
        if self.inv_depths.is_empty() {
            return Err(Error::InvalidProblem("at least one point is required"));
        }
        if self.anchors.len() != self.inv_depths.len() {
            return Err(Error::InvalidProblem(
                "one anchor per inverse depth is required",
            ));
        }
        if let Some(&d) = self
            .inv_depths
            .iter()
            .find(|d| !(**d > 0.0 && d.is_finite()))
        {
            return Err(Error::InvalidDepth { value: d });
        }
        if self.pattern.is_empty() {
            return Err(Error::InvalidPattern("pattern is empty"));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.targets.len()
    }

    pub fn points(&self) -> usize {
        self.inv_depths.len()
    }

    pub fn params(&self) -> Params {
        Params {
            poses: self.poses.clone(),
            inv_depths: self.inv_depths.clone(),
        }
    }

    pub fn set_params(&mut self, params: Params) {
        self.poses = params.poses;
        self.inv_depths = params.inv_depths;
    }
}

/// Poses and inverse depths, detached from the images.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub poses: Vec<Pose>,
    pub inv_depths: Vec<f64>,
}

impl Params {
    /// Rescales so that the mean inverse depth is one and returns the old
    /// mean. `d t` is unchanged, so every warp is preserved.
    pub fn normalize_scale(&mut self) -> f64 {
        let n = self.inv_depths.len() as f64;
        let mean = self.inv_depths.iter().sum::<f64>() / n;
        if !(mean > 0.0 && mean.is_finite()) {
            return 1.0;
        }
        for d in &mut self.inv_depths {
            *d /= mean;
        }
        for p in &mut self.poses {
            p.translation *= mean;
        }
        mean
    }
}

/// Template pixel of one point: normalized position and reference intensity.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TemplatePixel {
    pub x: Vector2<f64>,
    pub intensity: f64,
    /// `∇I₀` in normalized units.
    pub gradient: Vector2<f64>,
    pub valid: bool,
}

/// Reference-side data of every residual, independent of the parameters.
#[derive(Debug, Clone)]
pub(crate) struct Template {
    pub frames: usize,
    pub points: usize,
    pub patch: usize,
    pub pixels: Vec<TemplatePixel>,
    pub fx: f64,
    pub fy: f64,
}

impl Template {
    /// Template pixels whose half-pixel gradient footprint leaves the
    /// reference image are marked invalid for both solvers.
    pub fn new(state: &ProblemState) -> Self {
        let reference = &state.reference;
        let k = reference.intrinsics();
        let mut pixels = Vec::with_capacity(state.points() * state.pattern.len());
        for anchor in &state.anchors {
            for o in state.pattern.offsets() {
                let (u, v) = (anchor.x + o[0] as f64, anchor.y + o[1] as f64);
                let x = k.to_normalized(u, v);
                let sampled = reference
                    .sample_pixel(u, v)
                    .zip(reference.gradient_pixel(u, v));
                pixels.push(match sampled {
                    Some((intensity, g)) => TemplatePixel {
                        x,
                        intensity,
                        gradient: Vector2::new(g.x * k.fx, g.y * k.fy),
                        valid: true,
                    },
                    None => TemplatePixel {
                        x,
                        intensity: 0.0,
                        gradient: Vector2::zeros(),
                        valid: false,
                    },
                });
            }
        }
        let target = state.targets[0].intrinsics();
        Self {
            frames: state.frames(),
            points: state.points(),
            patch: state.pattern.len(),
            pixels,
            fx: target.fx,
            fy: target.fy,
        }
    }

    pub fn len(&self) -> usize {
        self.frames * self.points * self.patch
    }

    #[inline]
    pub fn pixel(&self, pair: usize, k: usize) -> &TemplatePixel {
        &self.pixels[(pair % self.points) * self.patch + k]
    }

    pub fn base_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.len());
        for _ in 0..self.frames {
            for p in &self.pixels {
                mask.push(p.valid);
            }
        }
        mask
    }
}

/// Pre-projection point `R x̃ + d t`, or `None` at or behind the camera plane.
#[inline]
pub(crate) fn warp_point(x: &Vector2<f64>, pose: &Pose, d: f64) -> Option<Vector3<f64>> {
    let v = pose.rotation * homogeneous(x) + pose.translation * d;
    (v.z > DEPTH_EPSILON).then_some(v)
}

/// Residuals `r = I₀(x) − I_f(W(x; p))` at one parameter setting.
#[derive(Debug, Clone)]
pub struct ResidualSet {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub energy: f64,
    pub in_bounds: usize,
    /// Residuals permitted by the mask that fell outside the target image.
    pub out_of_bounds: usize,
}

pub(crate) fn evaluate_residuals(
    state: &ProblemState,
    template: &Template,
    params: &Params,
    mask: &[bool],
    huber: &HuberLoss,
    parallel: bool,
) -> ResidualSet {
    let k = template.patch;
    let mut slots: Vec<(f64, bool)> = vec![(0.0, false); template.len()];
    par::for_each_chunk(&mut slots, k, parallel, |pair, out| {
        let (f, n) = (pair / template.points, pair % template.points);
        let (pose, d) = (&params.poses[f], params.inv_depths[n]);
        let target = &state.targets[f];
        let intr = target.intrinsics();
        for (i, slot) in out.iter_mut().enumerate() {
            if !mask[pair * k + i] {
                continue;
            }
            let tp = template.pixel(pair, i);
            let Some(v) = warp_point(&tp.x, pose, d) else {
                continue;
            };
            let (u, w) = (intr.fx * v.x / v.z + intr.cx, intr.fy * v.y / v.z + intr.cy);
            if let Some(value) = target.sample_pixel(u, w) {
                *slot = (tp.intensity - value, true);
            }
        }
    });
    let mut set = ResidualSet {
        values: Vec::with_capacity(slots.len()),
        valid: Vec::with_capacity(slots.len()),
        energy: 0.0,
        in_bounds: 0,
        out_of_bounds: 0,
    };
    for (i, (r, ok)) in slots.into_iter().enumerate() {
        set.values.push(r);
        set.valid.push(ok);
        if ok {
            set.energy += huber.loss(r);
            set.in_bounds += 1;
        } else if mask[i] {
            set.out_of_bounds += 1;
        }
    }
    set
}

/// Total Huber energy over all in-bounds residuals at the state's current
/// parameters.
pub fn energy_eval(state: &ProblemState, huber: &HuberLoss) -> Result<ResidualSet> {
    state.validate()?;
    let template = Template::new(state);
    let set = evaluate_residuals(
        state,
        &template,
        &state.params(),
        &template.base_mask(),
        huber,
        false,
    );
    if set.in_bounds == 0 {
        return Err(Error::EmptyProblem);
    }
    Ok(set)
}

/// Largest pixel displacement of any point anchor between two parameter
/// settings, over the pairs that still own an active residual.
pub(crate) fn max_update_px(
    template: &Template,
    anchors: &[Vector2<f64>],
    reference: &Image,
    before: &Params,
    after: &Params,
    mask: &[bool],
) -> f64 {
    let k = template.patch;
    let mut worst: f64 = 0.0;
    for f in 0..template.frames {
        for (n, a) in anchors.iter().enumerate() {
            let pair = f * template.points + n;
            if !mask[pair * k..(pair + 1) * k].iter().any(|m| *m) {
                continue;
            }
            let x = reference.intrinsics().to_normalized(a.x, a.y);
            let p0 = warp_point(&x, &before.poses[f], before.inv_depths[n]);
            let p1 = warp_point(&x, &after.poses[f], after.inv_depths[n]);
            let dist = match (p0, p1) {
                (Some(p0), Some(p1)) => {
                    let dx = (p1.x / p1.z - p0.x / p0.z) * template.fx;
                    let dy = (p1.y / p1.z - p0.y / p0.z) * template.fy;
                    crate::math::sqrt(dx * dx + dy * dy)
                }
                _ => f64::INFINITY,
            };
            worst = worst.max(dist);
        }
    }
    worst
}
