use std::path::Path;

use crate::error::{Error, Result};
use crate::imgproc::ImageBuffer;
use crate::model::{Camera, GaussianScene};

pub const DEFAULT_FOCUS_RATIO: f64 = 0.6;

/// Binary per-pixel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Pixels with any nonzero channel are set.
    pub fn from_image(img: &ImageBuffer) -> Self {
        let data = (0..img.pixels()).map(|p| img.data()[3 * p..3 * p + 3].iter().any(|&v| v > 0.0)).collect();
        Self {
            width: img.width(),
            height: img.height(),
            data,
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_image(&ImageBuffer::load_png(path)?))
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }
}

/// Keeps level-1 Gaussians and those whose centre lands on a mask pixel in
/// at least `ratio` of the views that see it in frame. Gaussians never in
/// frame are kept.
pub fn focus(scene: &GaussianScene, cameras: &[Camera], masks: &[Mask], ratio: f64) -> Result<GaussianScene> {
    if cameras.len() != masks.len() {
        return Err(Error::Invalid(format!("{} masks for {} cameras", masks.len(), cameras.len())));
    }
    for (i, (c, m)) in cameras.iter().zip(masks).enumerate() {
        if (c.width, c.height) != (m.width, m.height) {
            return Err(Error::Invalid(format!(
                "mask {i} is {}x{}, camera is {}x{}",
                m.width, m.height, c.width, c.height
            )));
        }
    }
    Ok(scene.retain(|i| {
        if scene.levels[i] == 1 {
            return true;
        }
        let (mut hits, mut seen) = (0usize, 0usize);
        for (cam, mask) in cameras.iter().zip(masks) {
            let Some([x, y]) = cam.project(scene.positions[i]) else {
                continue;
            };
            if x < 0.0 || y < 0.0 || x >= cam.width as f64 || y >= cam.height as f64 {
                continue;
            }
            seen += 1;
            if mask.get(x as usize, y as usize) {
                hits += 1;
            }
        }
        seen == 0 || hits as f64 >= ratio * seen as f64
    }))
}
