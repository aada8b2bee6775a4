//! Differentiable tile-based rasterizer.
//!
//! Gaussians are projected with the EWA approximation, sorted by camera depth
//! (ties broken by scene index), binned into 16x16 tiles and alpha-blended
//! front to back. Every accumulated-level image is rendered at full
//! resolution and clamped to [0,1]. [`ForwardState::backward`] walks each
//! pixel's contributors back to front and chains the per-splat gradients to
//! positions, rotations, log-scales, opacity logits and SH coefficients.

mod project;
mod raster;

pub use project::{project, Splat2D, COV_BLUR, FRUSTUM_MARGIN, MAX_ALPHA, MAX_MAHALANOBIS_SQ};
pub use raster::{ForwardState, MAX_PASSES, MIN_TRANSMITTANCE, TILE};

use crate::error::Result;
use crate::imgproc::ImageBuffer;
use crate::model::{Camera, ColorMode, GaussianScene};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Scale opacity by `sqrt(det(cov) / det(cov + 0.3 I))`.
    pub aa_opacity: bool,
    pub color_mode: ColorMode,
    /// Process tiles sequentially on the calling thread.
    pub deterministic: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            aa_opacity: false,
            color_mode: ColorMode::Residual,
            deterministic: true,
        }
    }
}

/// The accumulated-level renders `(I_1 .. I_L)` of one view.
#[derive(Clone, Debug)]
pub struct LevelRenderSet {
    pub images: Vec<ImageBuffer>,
}

impl LevelRenderSet {
    pub fn level(&self, k: u32) -> &ImageBuffer {
        &self.images[k as usize - 1]
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Per-Gaussian gradients, indexed like the scene arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderGrads {
    pub positions: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    pub sh: Vec<f64>,
    /// Norm of the loss gradient with respect to the projected centre.
    pub screen_grad_norm: Vec<f64>,
    /// Whether the Gaussian survived culling in this view.
    pub visible: Vec<bool>,
}

impl RenderGrads {
    pub fn zeros(scene: &GaussianScene) -> Self {
        let n = scene.len();
        Self {
            positions: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            log_scales: vec![[0.0; 3]; n],
            opacity_logits: vec![0.0; n],
            sh: vec![0.0; scene.sh.len()],
            screen_grad_norm: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.positions.iter().flatten().all(|&v| v == 0.0)
            && self.rotations.iter().flatten().all(|&v| v == 0.0)
            && self.log_scales.iter().flatten().all(|&v| v == 0.0)
            && self.opacity_logits.iter().all(|&v| v == 0.0)
            && self.sh.iter().all(|&v| v == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.sh.iter().all(|v| v.is_finite())
    }
}

/// Renders the accumulated level `k` (all Gaussians with level `<= k`).
pub fn render_level(scene: &GaussianScene, camera: &Camera, k: u32, opts: &RenderOptions) -> Result<ImageBuffer> {
    let state = ForwardState::new(scene, camera, &[k], opts)?;
    Ok(state.into_images().pop().expect("one level requested"))
}

/// Renders `I_1 .. I_levels` from a single projection.
pub fn render_all_levels(scene: &GaussianScene, camera: &Camera, levels: u32, opts: &RenderOptions) -> Result<LevelRenderSet> {
    let ks: Vec<u32> = (1..=levels).collect();
    let state = ForwardState::new(scene, camera, &ks, opts)?;
    Ok(LevelRenderSet {
        images: state.into_images(),
    })
}

/// Forward and backward pass for a single level.
pub fn render_backward(
    scene: &GaussianScene,
    camera: &Camera,
    k: u32,
    upstream: &ImageBuffer,
    opts: &RenderOptions,
) -> Result<RenderGrads> {
    let state = ForwardState::new(scene, camera, &[k], opts)?;
    state.backward(scene, &[(k, upstream)])
}
