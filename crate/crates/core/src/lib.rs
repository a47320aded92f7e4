//! Online 3D object proposals from RGB-D sequences.

pub mod config;
pub mod dataio;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod plane;
pub mod proposals2d;
pub mod proposals3d;
pub mod raster;
pub mod synth;
