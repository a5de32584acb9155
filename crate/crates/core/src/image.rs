//! Grayscale images with pinhole intrinsics, bilinear sampling and gradients.
//!
//! Sampling functions take normalized image coordinates; intrinsics map them
//! to pixels by `u = fx x + cx`, `v = fy y + cy`, with pixel centers at
//! integer coordinates.

use alloc::vec::Vec;

use nalgebra::Vector2;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    /// Focal length `f` with the principal point at the image center.
    pub fn centered(f: f64, width: usize, height: usize) -> Self {
        Self {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) * 0.5,
            cy: (height as f64 - 1.0) * 0.5,
        }
    }

    #[inline]
    pub fn to_pixel(&self, x: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * x.x + self.cx, self.fy * x.y + self.cy)
    }

    #[inline]
    pub fn to_normalized(&self, u: f64, v: f64) -> Vector2<f64> {
        Vector2::new((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }
}

/// Row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
    intrinsics: Intrinsics,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f64>,
        intrinsics: Intrinsics,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidImage("image must be at least 2x2"));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage("data length does not match dimensions"));
        }
        if !data.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidImage(
                "intensities must be finite and within [0, 1]",
            ));
        }
        if !(intrinsics.fx.is_finite() && intrinsics.fy.is_finite())
            || intrinsics.fx == 0.0
            || intrinsics.fy == 0.0
        {
            return Err(Error::InvalidImage(
                "focal lengths must be finite and non-zero",
            ));
        }
        Ok(Self {
            width,
            height,
            data,
            intrinsics,
        })
    }

    /// Builds an image by evaluating `f(u, v)` at every pixel center.
    pub fn from_fn(
        width: usize,
        height: usize,
        intrinsics: Intrinsics,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::new(width, height, data, intrinsics)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    /// Bilinear sample at pixel coordinates, `None` outside `[0, W−2] × [0, H−2]`.
    #[inline]
    pub fn sample_pixel(&self, u: f64, v: f64) -> Option<f64> {
        if !(u >= 0.0 && v >= 0.0 && u <= (self.width - 2) as f64 && v <= (self.height - 2) as f64)
        {
            return None;
        }
        // Both coordinates are non-negative here, so truncation is floor.
        let (u0, v0) = (u as usize, v as usize);
        let (a, b) = (u - u0 as f64, v - v0 as f64);
        let i = v0 * self.width + u0;
        let d = &self.data;
        let top = d[i] + a * (d[i + 1] - d[i]);
        let bottom = d[i + self.width] + a * (d[i + self.width + 1] - d[i + self.width]);
        Some(top + b * (bottom - top))
    }

    /// Half-pixel central differences of the interpolant, in intensity per
    /// pixel. Requires the point to lie in `[0.5, W−2.5] × [0.5, H−2.5]`.
    #[inline]
    pub fn gradient_pixel(&self, u: f64, v: f64) -> Option<Vector2<f64>> {
        let gx = self.sample_pixel(u + 0.5, v)? - self.sample_pixel(u - 0.5, v)?;
        let gy = self.sample_pixel(u, v + 0.5)? - self.sample_pixel(u, v - 0.5)?;
        Some(Vector2::new(gx, gy))
    }

    /// Bilinear sample at normalized coordinates.
    pub fn sample(&self, x: &Vector2<f64>) -> Result<f64> {
        let p = self.intrinsics.to_pixel(x);
        self.sample_pixel(p.x, p.y)
            .ok_or(Error::OutOfBounds { u: p.x, v: p.y })
    }

    /// Image gradient in intensity per normalized-coordinate unit.
    pub fn gradient(&self, x: &Vector2<f64>) -> Result<Vector2<f64>> {
        let p = self.intrinsics.to_pixel(x);
        let g = self
            .gradient_pixel(p.x, p.y)
            .ok_or(Error::OutOfBounds { u: p.x, v: p.y })?;
        Ok(Vector2::new(
            g.x * self.intrinsics.fx,
            g.y * self.intrinsics.fy,
        ))
    }
}

/// Bilinear interpolation of `img` at normalized coordinates `point`.
pub fn sample_bilinear(img: &Image, point: &Vector2<f64>) -> Result<f64> {
    img.sample(point)
}

/// `(∂I/∂x, ∂I/∂y)` at normalized coordinates `point`.
pub fn image_gradient(img: &Image, point: &Vector2<f64>) -> Result<Vector2<f64>> {
    img.gradient(point)
}

/// Pixel offsets, relative to a point's anchor, whose residuals belong to
/// that point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPattern {
    offsets: Vec<[i32; 2]>,
}

impl Default for PatchPattern {
    fn default() -> Self {
        Self::square(1)
    }
}

impl PatchPattern {
    pub fn new(offsets: Vec<[i32; 2]>) -> Result<Self> {
        if !offsets.contains(&[0, 0]) {
            return Err(Error::InvalidPattern(
                "pattern must contain the (0, 0) offset",
            ));
        }
        for (i, o) in offsets.iter().enumerate() {
            if offsets[..i].contains(o) {
                return Err(Error::InvalidPattern("pattern offsets must be distinct"));
            }
        }
        Ok(Self { offsets })
    }

    /// `(2r+1)²` square centred on the anchor, row by row.
    pub fn square(radius: u32) -> Self {
        let r = radius as i32;
        let offsets = (-r..=r)
            .flat_map(|dv| (-r..=r).map(move |du| [du, dv]))
            .collect();
        Self { offsets }
    }

    pub fn single() -> Self {
        Self {
            offsets: alloc::vec![[0, 0]],
        }
    }

    pub fn offsets(&self) -> &[[i32; 2]] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Largest absolute offset along either axis.
    pub fn radius(&self) -> u32 {
        self.offsets
            .iter()
            .map(|o| o[0].unsigned_abs().max(o[1].unsigned_abs()))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn intr() -> Intrinsics {
        Intrinsics::new(50.0, 40.0, 9.5, 7.0)
    }

    fn ramp() -> Image {
        Image::from_fn(20, 15, intr(), |u, _| u as f64 / 20.0).unwrap()
    }

    #[test]
    fn lattice_points_return_stored_values() {
        let img =
            Image::from_fn(6, 5, intr(), |u, v| ((u * 7 + v * 3) % 11) as f64 / 11.0).unwrap();
        for v in 0..4 {
            for u in 0..5 {
                let x = img.intrinsics().to_normalized(u as f64, v as f64);
                assert_relative_eq!(img.sample(&x).unwrap(), img.pixel(u, v), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn midpoint_is_the_average() {
        let img = Image::new(3, 2, alloc::vec![0.2, 0.6, 0.0, 0.2, 0.6, 0.0], intr()).unwrap();
        assert_relative_eq!(img.sample_pixel(0.5, 0.0).unwrap(), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn ramp_is_reproduced_exactly() {
        let img = ramp();
        let mut s = 0.137f64;
        for _ in 0..100 {
            s = (s * 9301.0 + 49297.0) % 233280.0;
            let u = (s / 233280.0) * 18.0;
            let v = ((s * 7.0) % 233280.0) / 233280.0 * 13.0;
            let x = img.intrinsics().to_normalized(u, v);
            assert_relative_eq!(img.sample(&x).unwrap(), u / 20.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_bounds_is_reported() {
        let img = ramp();
        let x = img.intrinsics().to_normalized(18.5, 3.0);
        assert!(matches!(img.sample(&x), Err(Error::OutOfBounds { .. })));
        assert!(img.sample_pixel(-1e-9, 0.0).is_none());
        assert!(img.sample_pixel(f64::NAN, 0.0).is_none());
        assert!(img.sample_pixel(18.0, 13.0).is_some());
        assert!(img.gradient_pixel(0.4, 3.0).is_none());
    }

    #[test]
    fn pixel_normalized_round_trip() {
        let k = intr();
        let x = k.to_normalized(3.25, 11.75);
        let p = k.to_pixel(&x);
        assert_relative_eq!(p.x, 3.25, epsilon = 1e-12);
        assert_relative_eq!(p.y, 11.75, epsilon = 1e-12);
    }

    #[test]
    fn gradient_of_flat_and_ramp_images() {
        let flat = Image::from_fn(10, 10, intr(), |_, _| 0.5).unwrap();
        let x = flat.intrinsics().to_normalized(4.3, 5.1);
        assert_eq!(flat.gradient(&x).unwrap(), Vector2::zeros());
        let img = ramp();
        for (u, v) in [(1.0, 1.0), (7.3, 4.9), (16.2, 12.1)] {
            let g = img.gradient(&img.intrinsics().to_normalized(u, v)).unwrap();
            assert_relative_eq!(g.x, intr().fx / 20.0, epsilon = 1e-12);
            assert_relative_eq!(g.y, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_fine_differences_on_bilinear_images() {
        let img = Image::from_fn(16, 12, intr(), |u, v| {
            let (u, v) = (u as f64, v as f64);
            0.1 + 0.02 * u + 0.01 * v + 0.002 * u * v
        })
        .unwrap();
        let h = 1e-7;
        for (u, v) in [(3.3, 4.6), (8.7, 2.2), (11.1, 7.9)] {
            let x = img.intrinsics().to_normalized(u, v);
            let g = img.gradient(&x).unwrap();
            let fx = (img.sample(&(x + Vector2::new(h, 0.0))).unwrap()
                - img.sample(&(x - Vector2::new(h, 0.0))).unwrap())
                / (2.0 * h);
            let fy = (img.sample(&(x + Vector2::new(0.0, h))).unwrap()
                - img.sample(&(x - Vector2::new(0.0, h))).unwrap())
                / (2.0 * h);
            assert_relative_eq!(g.x, fx, epsilon = 1e-8, max_relative = 1e-8);
            assert_relative_eq!(g.y, fy, epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn gradient_is_linear_in_the_image() {
        let a =
            Image::from_fn(12, 10, intr(), |u, v| ((u * 13 + v * 7) % 17) as f64 / 40.0).unwrap();
        let b =
            Image::from_fn(12, 10, intr(), |u, v| ((u * 5 + v * 11) % 19) as f64 / 40.0).unwrap();
        let sum = Image::new(
            12,
            10,
            a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
            intr(),
        )
        .unwrap();
        for (u, v) in [(2.2, 3.7), (5.5, 5.5), (8.9, 1.4)] {
            let x = a.intrinsics().to_normalized(u, v);
            let lhs = sum.gradient(&x).unwrap();
            let rhs = a.gradient(&x).unwrap() + b.gradient(&x).unwrap();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_images() {
        assert!(Image::new(2, 2, alloc::vec![0.0; 3], intr()).is_err());
        assert!(Image::new(2, 2, alloc::vec![0.0, 0.5, 1.2, 0.0], intr()).is_err());
        assert!(Image::new(2, 2, alloc::vec![0.0, f64::NAN, 0.1, 0.0], intr()).is_err());
    }

    #[test]
    fn patch_patterns() {
        let p = PatchPattern::default();
        assert_eq!(p.len(), 9);
        assert_eq!(p.radius(), 1);
        assert!(p.offsets().contains(&[0, 0]));
        assert!(PatchPattern::new(alloc::vec![[1, 0]]).is_err());
        assert!(PatchPattern::new(alloc::vec![[0, 0], [1, 1], [1, 1]]).is_err());
        assert_eq!(PatchPattern::single().radius(), 0);
    }
}
