//! Frequency-level Gaussian splatting on the CPU.
//!
//! Gaussians carry an integer frequency level. Rendering every Gaussian up
//! to level `k` reproduces the `k`-th low-pass image of a Laplacian pyramid;
//! higher levels use signed residual colors. Training follows a progressive
//! coarse-to-fine schedule with spatial and DFT-magnitude losses.

pub mod apps;
pub mod error;
pub mod imgproc;
pub mod model;
pub mod render;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
