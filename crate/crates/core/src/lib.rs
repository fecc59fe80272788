//! Geometry-aware conditioning, fusion and scheduling for reference-based
//! multiview inpainting.
//!
//! The crate lifts reference depth maps into meshes, renders them into a target
//! camera to build appearance and geometric cues, fuses per-reference denoiser
//! outputs through a confidence hierarchy, and plans the order in which the views
//! of a scene are inpainted. The denoiser and the geometry estimator are traits
//! with deterministic built-in implementations.

pub mod camera;
pub mod cues;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod hull;
pub mod io;
pub mod mesh;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod schedule;
pub mod synth;

pub use camera::{view_distance, Camera};
pub use error::{Error, Result};
pub use grid::{Grid, Mask, RgbImage};
