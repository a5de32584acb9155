//! Images, scene descriptions, metrics CSV and JSON reports on disk.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use pba_core::synth::Scene;
use pba_core::{Image, Intrinsics, Pose};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCENE_FILE: &str = "scene.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> CliError + '_ {
    move |source| CliError::Image {
        path: path.to_owned(),
        source,
    }
}

/// Loads a grayscale PGM or PNG (8 or 16 bit) with intensities scaled to
/// `[0, 1]`.
pub fn read_image(path: &Path, intrinsics: Intrinsics) -> Result<Image, CliError> {
    let img = image::open(path).map_err(image_err(path))?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 65535.0)
        .collect();
    Ok(Image::new(w as usize, h as usize, data, intrinsics)?)
}

/// Writes a binary 16-bit PGM (big-endian samples, maxval 65535).
pub fn write_pgm16(path: &Path, img: &Image) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write!(w, "P5\n{} {}\n65535\n", img.width(), img.height()).map_err(io_err(path))?;
    for v in img.data() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        w.write_all(&q.to_be_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// `scene.json`: ground truth and the image list of a scene directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub width: usize,
    pub height: usize,
    pub intrinsics: IntrinsicsFile,
    /// Image file names, reference first.
    pub frames: Vec<String>,
    /// Reference-to-frame transforms, row-major 4×4; the first is the
    /// identity.
    pub poses: Vec<[f64; 16]>,
    pub inv_depths: Vec<f64>,
    /// Anchor pixels `[u, v]` in the reference image.
    pub anchors: Vec<[f64; 2]>,
    /// Patch radius the anchors were checked for.
    pub patch_radius: u32,
    /// Residuals at the ground truth for single pixels and full patches.
    #[serde(default)]
    pub consistency: Vec<ConsistencyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEntry {
    pub pattern: String,
    pub mean_abs_residual: f64,
    pub max_abs_residual: f64,
}

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:03}.pgm")
}

/// Writes every frame and `scene.json` into `dir`.
pub fn write_scene(
    dir: &Path,
    scene: &Scene,
    patch_radius: u32,
    consistency: Vec<ConsistencyEntry>,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut frames = Vec::with_capacity(scene.frames());
    for (i, img) in scene.images.iter().enumerate() {
        let name = frame_name(i);
        write_pgm16(&dir.join(&name), img)?;
        frames.push(name);
    }
    let k = scene.intrinsics;
    let file = SceneFile {
        width: scene.images[0].width(),
        height: scene.images[0].height(),
        intrinsics: IntrinsicsFile {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
        },
        frames,
        poses: scene.poses.iter().map(Pose::to_row_major).collect(),
        inv_depths: scene.inv_depths.clone(),
        anchors: scene.anchors.iter().map(|a| [a.x, a.y]).collect(),
        patch_radius,
        consistency,
    };
    write_json(&dir.join(SCENE_FILE), &file)
}

/// Reads a scene directory written by [`write_scene`].
pub fn read_scene(dir: &Path) -> Result<(Scene, SceneFile), CliError> {
    let path = dir.join(SCENE_FILE);
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{} not found; run `pba generate` first",
            path.display()
        )));
    }
    let file: SceneFile = read_json(&path)?;
    let n = file.frames.len();
    if n < 2 || file.poses.len() != n {
        return Err(CliError::Config(format!(
            "{}: need at least two frames and one pose per frame",
            path.display()
        )));
    }
    if file.anchors.len() != file.inv_depths.len() {
        return Err(CliError::Config(format!(
            "{}: need one inverse depth per anchor",
            path.display()
        )));
    }
    let k = Intrinsics::new(
        file.intrinsics.fx,
        file.intrinsics.fy,
        file.intrinsics.cx,
        file.intrinsics.cy,
    );
    let images = file
        .frames
        .iter()
        .map(|name| {
            let img = read_image(&dir.join(name), k)?;
            if (img.width(), img.height()) != (file.width, file.height) {
                return Err(CliError::Config(format!(
                    "{name} does not match the scene size"
                )));
            }
            Ok(img)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let scene = Scene {
        images,
        poses: file.poses.iter().map(Pose::from_row_major).collect(),
        inv_depths: file.inv_depths.clone(),
        anchors: file
            .anchors
            .iter()
            .map(|a| Vector2::new(a[0], a[1]))
            .collect(),
        intrinsics: k,
    };
    Ok((scene, file))
}

/// One accepted iteration of a solve. Column order is part of the output
/// format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: usize,
    pub energy: f64,
    /// RMS of the rotation part of `log(T_est T_gt⁻¹)`, radians.
    pub rot_rms: f64,
    pub trans_rms: f64,
    pub idepth_rms: f64,
    /// Cumulative solver time.
    pub wall_ms: f64,
    pub hessian_builds: usize,
    pub hessian_factorizations: usize,
}

pub const METRICS_HEADER: [&str; 8] = [
    "iter",
    "energy",
    "rot_rms",
    "trans_rms",
    "idepth_rms",
    "wall_ms",
    "hessian_builds",
    "hessian_factorizations",
];

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        writer.write_record(METRICS_HEADER).map_err(csv_err)?;
    }
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(io_err(path))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err)
}

/// Creates `dir` and returns the path of `name` inside it.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir.join(name))
}

/// Writes lines of text, for the human-readable summaries.
pub fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for line in lines {
        writeln!(file, "{line}").map_err(io_err(path))?;
    }
    file.flush().map_err(io_err(path))
}
