//! Scene compiler from isometric 2D frames to 3D scene bundles, plus a
//! desk-scale diffusion-loss laboratory.

pub mod assemble;
pub mod camera;
pub mod cli;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod fixture;
pub mod grid;
pub mod io;
pub mod scene;
pub mod sketch;
pub mod understand;

pub use error::{IsoError, Result};