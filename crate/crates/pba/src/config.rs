//! JSON experiment configuration.
//!
//! Every field is optional. Missing fields give a 640×480 heightfield orbit
//! of 20 frames and 200 points, solved from σ = 1e-3 noise to a 5e-3 px
//! threshold. Relative paths are resolved against the
//! directory of the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nalgebra::Vector3;
use pba_core::synth::{SceneSpec, Surface, TextureSource, Trajectory};
use pba_core::{HuberLoss, Intrinsics, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::{io, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TextureConfig {
    Noise {
        wavelength_px: f64,
        octaves: u32,
        contrast: f64,
    },
    /// 8- or 16-bit PGM, or PNG, of the scene size.
    Image { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceConfig {
    Plane {
        depth: f64,
    },
    Heightfield {
        base: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryConfig {
    Orbit {
        frames: usize,
        extent_deg: f64,
    },
    Dolly {
        frames: usize,
        translation: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    /// Principal point; the image center when absent.
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    pub texture: TextureConfig,
    pub surface: SurfaceConfig,
    pub trajectory: TrajectoryConfig,
    pub points: usize,
    pub seed: u64,
    pub border_margin: f64,
    pub min_spacing: f64,
    pub patch_radius: u32,
    pub supersample: u32,
    pub pixel_noise: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let spec = SceneSpec::default();
        let TextureSource::Noise {
            wavelength_px,
            octaves,
            contrast,
        } = spec.texture
        else {
            unreachable!("the default texture is procedural")
        };
        Self {
            width: spec.width,
            height: spec.height,
            fx: spec.intrinsics.fx,
            fy: spec.intrinsics.fy,
            cx: None,
            cy: None,
            texture: TextureConfig::Noise {
                wavelength_px,
                octaves,
                contrast,
            },
            surface: match spec.surface {
                Surface::Plane { depth } => SurfaceConfig::Plane { depth },
                Surface::Heightfield {
                    base,
                    amplitude,
                    wavelength,
                } => SurfaceConfig::Heightfield {
                    base,
                    amplitude,
                    wavelength,
                },
            },
            trajectory: match spec.trajectory {
                Trajectory::Orbit { frames, extent_deg } => {
                    TrajectoryConfig::Orbit { frames, extent_deg }
                }
                Trajectory::Dolly {
                    frames,
                    translation,
                } => TrajectoryConfig::Dolly {
                    frames,
                    translation: translation.into(),
                },
            },
            points: spec.points,
            seed: spec.seed,
            border_margin: spec.border_margin,
            min_spacing: spec.min_spacing,
            patch_radius: spec.patch_radius,
            supersample: spec.supersample,
            pixel_noise: spec.pixel_noise,
        }
    }
}

impl SceneConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        let centered = Intrinsics::centered(self.fx, self.width, self.height);
        Intrinsics::new(
            self.fx,
            self.fy,
            self.cx.unwrap_or(centered.cx),
            self.cy.unwrap_or(centered.cy),
        )
    }

    /// Renderer specification; loads the texture image if there is one.
    pub fn to_spec(&self, parallel: bool) -> Result<SceneSpec, CliError> {
        let intrinsics = self.intrinsics();
        let texture = match &self.texture {
            TextureConfig::Noise {
                wavelength_px,
                octaves,
                contrast,
            } => TextureSource::Noise {
                wavelength_px: *wavelength_px,
                octaves: *octaves,
                contrast: *contrast,
            },
            TextureConfig::Image { path } => {
                let img = io::read_image(path, intrinsics)?;
                if (img.width(), img.height()) != (self.width, self.height) {
                    return Err(CliError::Config(format!(
                        "texture {} is {}×{}, the scene is {}×{}",
                        path.display(),
                        img.width(),
                        img.height(),
                        self.width,
                        self.height
                    )));
                }
                TextureSource::Image(img)
            }
        };
        let spec = SceneSpec {
            width: self.width,
            height: self.height,
            intrinsics,
            texture,
            surface: match self.surface {
                SurfaceConfig::Plane { depth } => Surface::Plane { depth },
                SurfaceConfig::Heightfield {
                    base,
                    amplitude,
                    wavelength,
                } => Surface::Heightfield {
                    base,
                    amplitude,
                    wavelength,
                },
            },
            trajectory: match self.trajectory {
                TrajectoryConfig::Orbit { frames, extent_deg } => {
                    Trajectory::Orbit { frames, extent_deg }
                }
                TrajectoryConfig::Dolly {
                    frames,
                    translation,
                } => Trajectory::Dolly {
                    frames,
                    translation: Vector3::from(translation),
                },
            },
            points: self.points,
            seed: self.seed,
            border_margin: self.border_margin,
            min_spacing: self.min_spacing,
            patch_radius: self.patch_radius,
            supersample: self.supersample,
            pixel_noise: self.pixel_noise,
            parallel,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Fc,
    Ic,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scene rendered by `generate`.
    pub scene: SceneConfig,
    /// Scene directory read by `solve`; the output directory when absent.
    pub dataset: Option<PathBuf>,
    pub solver: SolverChoice,
    /// Standard deviation of the initial parameter noise.
    pub sigma: f64,
    /// Seed of the parameter noise.
    pub seed: u64,
    pub huber_gamma: f64,
    pub threshold_px: f64,
    pub max_iterations: usize,
    pub out: PathBuf,
    /// Sequential reductions and zero timings, for byte-identical outputs.
    pub deterministic: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            scene: SceneConfig::default(),
            dataset: None,
            solver: SolverChoice::Both,
            sigma: 1e-3,
            seed: 1,
            huber_gamma: HuberLoss::default().gamma(),
            threshold_px: solver.threshold_px,
            max_iterations: solver.max_iterations,
            out: PathBuf::from("out"),
            deterministic: false,
        }
    }
}

impl ExperimentConfig {
    /// Reads a configuration file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config: Self = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(dataset) = &mut config.dataset {
            resolve(dataset);
        }
        if let TextureConfig::Image { path } = &mut config.scene.texture {
            resolve(path);
        }
        resolve(&mut config.out);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_owned()));
        if !(self.threshold_px > 0.0 && self.threshold_px.is_finite()) {
            return bad("threshold_px must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be non-negative");
        }
        if !(self.huber_gamma > 0.0 && self.huber_gamma.is_finite()) {
            return bad("huber_gamma must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if let Some(dataset) = &self.dataset {
            if !dataset.is_dir() {
                return Err(CliError::Config(format!(
                    "dataset {} does not exist",
                    dataset.display()
                )));
            }
        }
        if let TextureConfig::Image { path } = &self.scene.texture {
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "texture {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let config = SolverConfig {
            huber: HuberLoss::new(self.huber_gamma)?,
            threshold_px: self.threshold_px,
            max_iterations: self.max_iterations,
            parallel: !self.deterministic,
            ..SolverConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn scene_dir(&self) -> &Path {
        self.dataset.as_deref().unwrap_or(&self.out)
    }
}
