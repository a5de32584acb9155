//! Synthetic image sequences with exact ground-truth poses and depths.
//!
//! The scene surface is described over the reference camera's normalized
//! image plane: the point seen through reference pixel `x` lies at depth
//! `Z(x)`, and carries the texture value at `x`. Frame 0 is the reference
//! camera. Other frames are rendered by intersecting each pixel's ray with
//! the surface and reading the texture where it lands.

mod noise;
mod perturb;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use noise::{GradientNoise, NoiseTexture, WaveField};
pub use perturb::perturb_parameters;

use crate::geometry::{homogeneous, project_warp, Pose};
use crate::image::{Image, Intrinsics, PatchPattern};
use crate::math::{abs, ceil, cos, sin};
use crate::par;
use crate::solver::{Params, ProblemState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TextureSource {
    /// Gradient noise; `wavelength_px` is the lattice spacing of the first
    /// octave in reference pixels.
    Noise {
        wavelength_px: f64,
        octaves: u32,
        contrast: f64,
    },
    /// An image stretched over the reference view.
    Image(Image),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Fronto-parallel plane.
    Plane { depth: f64 },
    /// `Z(x) = base + amplitude · h(x)` with smooth `h` in `[−1, 1]`;
    /// `wavelength` is in normalized image units.
    Heightfield {
        base: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

impl Surface {
    fn base(&self) -> f64 {
        match self {
            Surface::Plane { depth } => *depth,
            Surface::Heightfield { base, .. } => *base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    /// Rotation about the vertical axis through the surface point on the
    /// optical axis, from 0 to `extent_deg` degrees.
    Orbit { frames: usize, extent_deg: f64 },
    /// Straight line of camera centers from the origin to `translation`.
    Dolly {
        frames: usize,
        translation: Vector3<f64>,
    },
}

impl Trajectory {
    pub fn frames(&self) -> usize {
        match self {
            Trajectory::Orbit { frames, .. } | Trajectory::Dolly { frames, .. } => *frames,
        }
    }

    /// Reference-to-camera poses before scale normalization.
    fn poses(&self, center_depth: f64) -> Vec<Pose> {
        let n = self.frames();
        let frac = |i: usize| {
            if n > 1 {
                i as f64 / (n - 1) as f64
            } else {
                0.0
            }
        };
        (0..n)
            .map(|i| match self {
                Trajectory::Orbit { extent_deg, .. } => {
                    let a = extent_deg.to_radians() * frac(i);
                    let (s, c) = (sin(a), cos(a));
                    #[rustfmt::skip]
                    let ry = Matrix3::new(
                        c, 0.0, s,
                        0.0, 1.0, 0.0,
                        -s, 0.0, c,
                    );
                    let pivot = Vector3::new(0.0, 0.0, center_depth);
                    let center = pivot + ry * Vector3::new(0.0, 0.0, -center_depth);
                    let rotation = ry.transpose();
                    Pose::new(rotation, -(rotation * center))
                }
                Trajectory::Dolly { translation, .. } => {
                    Pose::from_translation(-translation * frac(i))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub texture: TextureSource,
    pub surface: Surface,
    pub trajectory: Trajectory,
    /// Number of anchor points.
    pub points: usize,
    pub seed: u64,
    /// Minimum distance of anchors from the reference image border, px.
    pub border_margin: f64,
    /// Minimum Chebyshev distance between anchors, px.
    pub min_spacing: f64,
    /// Patch radius that must stay inside every frame.
    pub patch_radius: u32,
    /// Samples per pixel along each axis, box filtered.
    pub supersample: u32,
    /// Standard deviation of additive Gaussian pixel noise.
    pub pixel_noise: f64,
    pub parallel: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            intrinsics: Intrinsics::new(500.0, 500.0, 319.5, 239.5),
            texture: TextureSource::Noise {
                wavelength_px: 64.0,
                octaves: 2,
                contrast: 0.4,
            },
            surface: Surface::Heightfield {
                base: 1.0,
                amplitude: 0.1,
                wavelength: 0.6,
            },
            trajectory: Trajectory::Orbit {
                frames: 20,
                extent_deg: 10.0,
            },
            points: 200,
            seed: 0,
            border_margin: 32.0,
            min_spacing: 12.0,
            patch_radius: 1,
            supersample: 2,
            pixel_noise: 0.0,
            parallel: true,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidConfig("image must be at least 2×2"));
        }
        if self.trajectory.frames() < 2 {
            return Err(Error::InvalidConfig("at least two frames are required"));
        }
        if self.points == 0 {
            return Err(Error::InvalidConfig("at least one point is required"));
        }
        if self.supersample == 0 {
            return Err(Error::InvalidConfig("supersample must be at least 1"));
        }
        if !(self.pixel_noise >= 0.0) || !(self.min_spacing >= 0.0) || !(self.border_margin >= 0.0)
        {
            return Err(Error::InvalidConfig(
                "noise, spacing and margin must be non-negative",
            ));
        }
        let ok = match self.surface {
            Surface::Plane { depth } => depth > 0.0,
            Surface::Heightfield {
                base,
                amplitude,
                wavelength,
            } => base > 0.0 && amplitude >= 0.0 && amplitude < base && wavelength > 0.0,
        };
        if !ok {
            return Err(Error::InvalidConfig(
                "surface must stay in front of the reference camera",
            ));
        }
        if let TextureSource::Noise {
            wavelength_px,
            contrast,
            ..
        } = self.texture
        {
            if !(wavelength_px > 0.0 && (0.0..=0.5).contains(&contrast)) {
                return Err(Error::InvalidConfig(
                    "noise needs a positive wavelength and contrast ≤ 0.5",
                ));
            }
        }
        Ok(())
    }
}

/// Rendered frames and ground truth. `poses[0]` is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub images: Vec<Image>,
    pub poses: Vec<Pose>,
    pub inv_depths: Vec<f64>,
    /// Anchor pixels in the reference image.
    pub anchors: Vec<Vector2<f64>>,
    pub intrinsics: Intrinsics,
}

impl Scene {
    pub fn frames(&self) -> usize {
        self.images.len()
    }

    /// Parameters of frames `1..F` and all points.
    pub fn ground_truth(&self) -> Params {
        Params {
            poses: self.poses[1..].to_vec(),
            inv_depths: self.inv_depths.clone(),
        }
    }

    /// Bundle adjustment problem over this scene, initialized at `params`.
    pub fn problem(&self, params: &Params, pattern: PatchPattern) -> Result<ProblemState> {
        ProblemState::new(
            self.images[0].clone(),
            self.images[1..].to_vec(),
            params.poses.clone(),
            params.inv_depths.clone(),
            self.anchors.clone(),
            pattern,
        )
    }
}

enum Texture<'a> {
    Noise(NoiseTexture),
    Image(&'a Image),
}

enum Shape {
    Plane(f64),
    Heightfield {
        base: f64,
        amplitude: f64,
        field: WaveField,
    },
}

impl Shape {
    /// Depth along the reference ray through `x`, and its gradient.
    fn depth(&self, x: &Vector2<f64>) -> (f64, Vector2<f64>) {
        match self {
            Shape::Plane(z) => (*z, Vector2::zeros()),
            Shape::Heightfield {
                base,
                amplitude,
                field,
            } => {
                let (h, g) = field.value_and_gradient(x);
                (base + amplitude * h, g * *amplitude)
            }
        }
    }
}

struct World<'a> {
    spec: &'a SceneSpec,
    texture: Texture<'a>,
    shape: Shape,
}

const NEWTON_ITERATIONS: usize = 50;

impl World<'_> {
    fn texture(&self, x: &Vector2<f64>) -> f64 {
        let k = &self.spec.intrinsics;
        let p = k.to_pixel(x);
        match &self.texture {
            Texture::Noise(n) => n.value(p.x, p.y),
            Texture::Image(img) => {
                let su = img.width() as f64 / self.spec.width as f64;
                let sv = img.height() as f64 / self.spec.height as f64;
                let u = ((p.x + 0.5) * su - 0.5).clamp(0.0, (img.width() - 2) as f64);
                let v = ((p.y + 0.5) * sv - 0.5).clamp(0.0, (img.height() - 2) as f64);
                img.sample_pixel(u, v).unwrap_or(0.0)
            }
        }
    }

    /// Reference-plane coordinates where the ray `origin + s · dir` meets
    /// the surface. `guess` warm-starts the ray parameter.
    fn intersect(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        guess: &mut Option<f64>,
    ) -> Option<Vector2<f64>> {
        let base = self.spec.surface.base();
        let mut s = match *guess {
            Some(s) => s,
            None => (base - origin.z) / dir.z,
        };
        for _ in 0..NEWTON_ITERATIONS {
            let p = origin + dir * s;
            if !(p.z > 0.0) {
                return None;
            }
            let x = Vector2::new(p.x / p.z, p.y / p.z);
            let (z, g) = self.shape.depth(&x);
            let dx =
                Vector2::new(dir.x * p.z - p.x * dir.z, dir.y * p.z - p.y * dir.z) / (p.z * p.z);
            let slope = dir.z - g.dot(&dx);
            let step = (p.z - z) / slope;
            s -= step;
            // Quadratic convergence: the error after this step is far below
            // the step itself.
            if abs(step) <= 1e-9 * (1.0 + abs(s)) {
                let p = origin + dir * s;
                *guess = Some(s);
                return (p.z > 0.0).then(|| Vector2::new(p.x / p.z, p.y / p.z));
            }
        }
        None
    }

    /// Renders the camera with world-to-camera pose `camera`; `world` maps
    /// surface coordinates into the world.
    fn render(&self, camera: &Pose, world: &Pose, rng: &mut ChaCha8Rng) -> Result<Image> {
        let spec = self.spec;
        let (w, h) = (spec.width, spec.height);
        let k = &spec.intrinsics;
        let inv_world = world.inverse();
        let origin = inv_world.transform(&(-(camera.rotation.transpose() * camera.translation)));
        let to_surface = inv_world.rotation * camera.rotation.transpose();
        let ss = spec.supersample as usize;
        let mut data = vec![0.0; w * h];
        par::for_each_chunk(&mut data, w, spec.parallel, |v, row| {
            let mut guess = None;
            for (u, out) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for sj in 0..ss {
                    for si in 0..ss {
                        let pu = u as f64 + (si as f64 + 0.5) / ss as f64 - 0.5;
                        let pv = v as f64 + (sj as f64 + 0.5) / ss as f64 - 0.5;
                        let dir = to_surface * homogeneous(&k.to_normalized(pu, pv));
                        if origin == Vector3::zeros() {
                            acc += self.texture(&Vector2::new(dir.x / dir.z, dir.y / dir.z));
                            continue;
                        }
                        match self.intersect(&origin, &dir, &mut guess) {
                            Some(x) => acc += self.texture(&x),
                            None => acc = f64::NAN,
                        }
                    }
                }
                *out = acc / (ss * ss) as f64;
            }
        });
        if data.iter().any(|p| p.is_nan()) {
            return Err(Error::SpecInfeasible("a camera ray misses the surface"));
        }
        if spec.pixel_noise > 0.0 {
            for p in &mut data {
                let n: f64 = rng.sample(StandardNormal);
                *p = (*p + spec.pixel_noise * n).clamp(0.0, 1.0);
            }
        }
        Image::new(w, h, data, *k)
    }
}

/// Renders `spec` and returns images with ground truth.
pub fn render_sequence(spec: &SceneSpec) -> Result<Scene> {
    render_sequence_in_world(spec, &Pose::identity())
}

/// Renders `spec` with the whole scene placed in the world by `world`
/// (camera-to-world poses are left-multiplied by it). The images and the
/// reference-relative ground truth are unchanged up to rounding.
pub fn render_sequence_in_world(spec: &SceneSpec, world: &Pose) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let texture = match &spec.texture {
        TextureSource::Noise {
            wavelength_px,
            octaves,
            contrast,
        } => Texture::Noise(NoiseTexture::new(
            &mut rng,
            *wavelength_px,
            *octaves,
            *contrast,
        )),
        TextureSource::Image(img) => Texture::Image(img),
    };
    let shape = match spec.surface {
        Surface::Plane { depth } => Shape::Plane(depth),
        Surface::Heightfield {
            base,
            amplitude,
            wavelength,
        } => Shape::Heightfield {
            base,
            amplitude,
            field: WaveField::new(&mut rng, wavelength, 4),
        },
    };
    let scene = World {
        spec,
        texture,
        shape,
    };
    let relative = spec.trajectory.poses(spec.surface.base());
    let inv_world = world.inverse();
    let cameras: Vec<Pose> = relative.iter().map(|p| p * &inv_world).collect();
    let mut images = Vec::with_capacity(cameras.len());
    images.push(scene.render(&cameras[0], world, &mut rng)?);
    let to_reference = cameras[0].inverse();
    let mut poses: Vec<Pose> = cameras.iter().map(|c| c * &to_reference).collect();
    poses[0] = Pose::identity();

    let anchors = select_anchors(&images[0], spec)?;
    let k = &spec.intrinsics;
    let mut inv_depths: Vec<f64> = anchors
        .iter()
        .map(|a| 1.0 / scene.shape.depth(&k.to_normalized(a.x, a.y)).0)
        .collect();
    let mean = inv_depths.iter().sum::<f64>() / inv_depths.len() as f64;
    for d in &mut inv_depths {
        *d /= mean;
    }
    for p in &mut poses[1..] {
        p.translation *= mean;
    }
    check_visibility(spec, &poses, &inv_depths, &anchors)?;
    for camera in &cameras[1..] {
        images.push(scene.render(camera, world, &mut rng)?);
    }
    Ok(Scene {
        images,
        poses,
        inv_depths,
        anchors,
        intrinsics: *k,
    })
}

/// Local maxima of the gradient magnitude, strongest first, at least
/// `min_spacing` apart and `border_margin` from the border.
fn select_anchors(reference: &Image, spec: &SceneSpec) -> Result<Vec<Vector2<f64>>> {
    let (w, h) = (reference.width(), reference.height());
    let margin = spec.border_margin.max(spec.patch_radius as f64 + 1.0);
    let magnitude = |u: usize, v: usize| {
        let gx = reference.pixel(u + 1, v) - reference.pixel(u - 1, v);
        let gy = reference.pixel(u, v + 1) - reference.pixel(u, v - 1);
        gx * gx + gy * gy
    };
    let lo = ceil(margin) as usize;
    let (hi_u, hi_v) = (w as f64 - 1.0 - margin, h as f64 - 1.0 - margin);
    let mut candidates = Vec::new();
    for v in lo.max(2)..h.saturating_sub(2) {
        if v as f64 > hi_v {
            break;
        }
        for u in lo.max(2)..w.saturating_sub(2) {
            if u as f64 > hi_u {
                break;
            }
            let m = magnitude(u, v);
            let mut is_max = m > 0.0;
            'n: for dv in [-1i64, 0, 1] {
                for du in [-1i64, 0, 1] {
                    if (du, dv) == (0, 0) {
                        continue;
                    }
                    let other = magnitude((u as i64 + du) as usize, (v as i64 + dv) as usize);
                    if other > m || (other == m && (dv, du) < (0, 0)) {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                candidates.push((m, u, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    let mut anchors: Vec<Vector2<f64>> = Vec::with_capacity(spec.points);
    for (_, u, v) in candidates {
        let p = Vector2::new(u as f64, v as f64);
        let clear = anchors
            .iter()
            .all(|a| (a.x - p.x).abs().max((a.y - p.y).abs()) >= spec.min_spacing);
        if clear {
            anchors.push(p);
            if anchors.len() == spec.points {
                return Ok(anchors);
            }
        }
    }
    Err(Error::SpecInfeasible(
        "not enough textured anchor candidates",
    ))
}

/// Every anchor's patch must stay inside every frame, with one pixel to
/// spare for the gradient footprint and small perturbations.
fn check_visibility(
    spec: &SceneSpec,
    poses: &[Pose],
    inv_depths: &[f64],
    anchors: &[Vector2<f64>],
) -> Result<()> {
    let k = &spec.intrinsics;
    let r = spec.patch_radius as f64 + 1.5;
    let (max_u, max_v) = (spec.width as f64 - 2.0 - r, spec.height as f64 - 2.0 - r);
    for (n, a) in anchors.iter().enumerate() {
        let x = k.to_normalized(a.x, a.y);
        for (f, pose) in poses.iter().enumerate().skip(1) {
            let inside = project_warp(&x, pose, inv_depths[n])
                .map(|y| k.to_pixel(&y))
                .map(|p| p.x >= r && p.y >= r && p.x <= max_u && p.y <= max_v)
                .unwrap_or(false);
            if !inside {
                return Err(Error::AnchorOutOfView {
                    anchor: n,
                    frame: f,
                });
            }
        }
    }
    Ok(())
}

/// Mean and maximum absolute residual at the ground truth of `scene`.
pub fn rendering_consistency(scene: &Scene, pattern: PatchPattern) -> Result<(f64, f64)> {
    let state = scene.problem(&scene.ground_truth(), pattern)?;
    let set = crate::solver::energy_eval(&state, &crate::solver::HuberLoss::default())?;
    let (mut sum, mut max) = (0.0, 0.0f64);
    for (r, ok) in set.values.iter().zip(&set.valid) {
        if *ok {
            sum += abs(*r);
            max = max.max(abs(*r));
        }
    }
    Ok((sum / set.in_bounds as f64, max))
}
