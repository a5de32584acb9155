//! Procedural texture and surface functions.

use alloc::vec::Vec;

use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::math::{cos, sin, sin_cos};

const LATTICE: usize = 256;

/// Classic 2D gradient noise with unit gradients on an integer lattice.
///
/// Values lie in `[−√½, √½]`. The quintic fade makes it C² everywhere.
#[derive(Debug, Clone)]
pub struct GradientNoise {
    perm: Vec<u8>,
    gradients: Vec<Vector2<f64>>,
}

/// `floor` for the coordinate range the textures use.
#[inline]
fn lattice_floor(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t > x {
        t - 1.0
    } else {
        t
    }
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

impl GradientNoise {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut perm: Vec<u8> = (0..LATTICE).map(|i| i as u8).collect();
        perm.shuffle(rng);
        let gradients = (0..LATTICE)
            .map(|_| {
                let a = rng.random::<f64>() * core::f64::consts::TAU;
                Vector2::new(cos(a), sin(a))
            })
            .collect();
        Self { perm, gradients }
    }

    fn gradient(&self, i: i64, j: i64) -> &Vector2<f64> {
        let a = self.perm[i.rem_euclid(LATTICE as i64) as usize] as usize;
        let h = self.perm[(a + j.rem_euclid(LATTICE as i64) as usize) % LATTICE] as usize;
        &self.gradients[h]
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (lattice_floor(x), lattice_floor(y));
        let (fx, fy) = (x - x0, y - y0);
        let (i, j) = (x0 as i64, y0 as i64);
        let corner = |di: i64, dj: i64| {
            let g = self.gradient(i + di, j + dj);
            g.x * (fx - di as f64) + g.y * (fy - dj as f64)
        };
        let (u, v) = (fade(fx), fade(fy));
        let bottom = corner(0, 0) + u * (corner(1, 0) - corner(0, 0));
        let top = corner(0, 1) + u * (corner(1, 1) - corner(0, 1));
        bottom + v * (top - bottom)
    }
}

/// Octave sum of gradient noise mapped into `[0.5 − contrast, 0.5 + contrast]`.
#[derive(Debug, Clone)]
pub struct NoiseTexture {
    noise: GradientNoise,
    wavelength: f64,
    octaves: u32,
    contrast: f64,
    offset: Vector2<f64>,
}

impl NoiseTexture {
    pub fn new(rng: &mut ChaCha8Rng, wavelength: f64, octaves: u32, contrast: f64) -> Self {
        let noise = GradientNoise::new(rng);
        let offset = Vector2::new(rng.random::<f64>(), rng.random::<f64>()) * LATTICE as f64;
        Self {
            noise,
            wavelength,
            octaves: octaves.max(1),
            contrast,
            offset,
        }
    }

    /// Intensity at a position measured in pixels.
    pub fn value(&self, u: f64, v: f64) -> f64 {
        let (mut sum, mut norm, mut amp, mut freq) = (0.0, 0.0, 1.0, 1.0 / self.wavelength);
        for _ in 0..self.octaves {
            sum += amp
                * self
                    .noise
                    .value(u * freq + self.offset.x, v * freq + self.offset.y);
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        0.5 + self.contrast * sum / (norm * core::f64::consts::FRAC_1_SQRT_2)
    }
}

/// Smooth bump function `h(x)` in `[−1, 1]`: a sum of plane waves with
/// random directions and phases.
#[derive(Debug, Clone)]
pub struct WaveField {
    waves: Vec<(Vector2<f64>, f64, f64)>,
}

impl WaveField {
    pub fn new(rng: &mut ChaCha8Rng, wavelength: f64, count: usize) -> Self {
        let weight = 1.0 / count as f64;
        let waves = (0..count)
            .map(|_| {
                let a = rng.random::<f64>() * core::f64::consts::TAU;
                let phase = rng.random::<f64>() * core::f64::consts::TAU;
                let k = Vector2::new(cos(a), sin(a)) * (core::f64::consts::TAU / wavelength);
                (k, phase, weight)
            })
            .collect();
        Self { waves }
    }

    pub fn value(&self, x: &Vector2<f64>) -> f64 {
        self.waves
            .iter()
            .map(|(k, p, w)| w * sin(k.dot(x) + p))
            .sum()
    }

    pub fn gradient(&self, x: &Vector2<f64>) -> Vector2<f64> {
        self.value_and_gradient(x).1
    }

    pub fn value_and_gradient(&self, x: &Vector2<f64>) -> (f64, Vector2<f64>) {
        let mut value = 0.0;
        let mut gradient = Vector2::zeros();
        for (k, p, w) in &self.waves {
            let (s, c) = sin_cos(k.dot(x) + p);
            value += w * s;
            gradient += k * (w * c);
        }
        (value, gradient)
    }
}
