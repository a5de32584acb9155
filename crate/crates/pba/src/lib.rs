//! File formats, experiment configuration and the command implementations
//! behind the `pba` binary.
//!
//! A scene directory holds one 16-bit binary PGM per frame (`frame_000.pgm`
//! is the reference) and `scene.json` with the ground truth. Solving writes
//! one metrics CSV and one final-parameters JSON per solver.

pub mod commands;
pub mod config;
mod error;
pub mod io;

pub use error::{CliError, Outcome};
