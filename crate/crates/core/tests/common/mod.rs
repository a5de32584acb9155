#![allow(dead_code)]

use nalgebra::Vector3;
use pba_core::synth::{SceneSpec, Surface, TextureSource, Trajectory};
use pba_core::Intrinsics;

/// A scene small enough to render and solve in well under a second.
pub fn small_spec() -> SceneSpec {
    SceneSpec {
        width: 200,
        height: 150,
        intrinsics: Intrinsics::new(160.0, 160.0, 99.5, 74.5),
        texture: TextureSource::Noise {
            wavelength_px: 24.0,
            octaves: 2,
            contrast: 0.4,
        },
        trajectory: Trajectory::Orbit {
            frames: 6,
            extent_deg: 10.0,
        },
        points: 40,
        border_margin: 12.0,
        min_spacing: 6.0,
        ..SceneSpec::default()
    }
}

/// Fronto-parallel plane at depth 1 seen by a camera sliding sideways two
/// pixels per frame: every target is an exact pixel shift of the reference,
/// so residuals vanish at the ground truth.
pub fn exact_spec() -> SceneSpec {
    let f = 160.0;
    SceneSpec {
        surface: Surface::Plane { depth: 1.0 },
        trajectory: Trajectory::Dolly {
            frames: 6,
            translation: Vector3::new(10.0 / f, 0.0, 0.0),
        },
        border_margin: 14.0,
        ..small_spec()
    }
}
