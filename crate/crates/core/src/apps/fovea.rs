use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Camera, GaussianScene};

/// Gaze-centred importance falloff with one width per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoveaSpec {
    /// Gaze point in pixels.
    pub gaze: [f64; 2],
    /// Falloff width in pixels for level `l` at index `l - 1`.
    pub sigmas: Vec<f64>,
    /// Effective-opacity threshold in (0, 1).
    pub threshold: f64,
}

impl FoveaSpec {
    /// Widths halving per level from half the image diagonal.
    pub fn with_default_sigmas(camera: &Camera, levels: u32, gaze: [f64; 2], threshold: f64) -> Self {
        let diag = ((camera.width * camera.width + camera.height * camera.height) as f64).sqrt();
        let sigmas = (0..levels.max(1)).map(|l| diag / 2.0 / f64::powi(2.0, l as i32)).collect();
        Self { gaze, sigmas, threshold }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Invalid(format!("fovea threshold {} outside (0, 1)", self.threshold)));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Invalid("fovea widths must be positive".into()));
        }
        if self.sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Invalid("fovea widths must strictly decrease with level".into()));
        }
        if !self.gaze.iter().all(|g| g.is_finite()) {
            return Err(Error::Invalid("gaze point is not finite".into()));
        }
        Ok(())
    }

    /// Importance of a Gaussian at `level` whose centre projects to `p`.
    pub fn weight(&self, p: [f64; 2], level: u32) -> f64 {
        let s = self.sigmas[level as usize - 1];
        let d2 = (p[0] - self.gaze[0]).powi(2) + (p[1] - self.gaze[1]).powi(2);
        (-d2 / (2.0 * s * s)).exp()
    }
}

/// Keeps level-1 Gaussians and every other Gaussian whose opacity times its
/// gaze weight reaches the threshold. Survivors are unchanged.
pub fn foveate(scene: &GaussianScene, camera: &Camera, spec: &FoveaSpec) -> Result<GaussianScene> {
    spec.validate()?;
    if (scene.max_level() as usize) > spec.sigmas.len() {
        return Err(Error::Invalid(format!(
            "scene has level {} but only {} fovea widths",
            scene.max_level(),
            spec.sigmas.len()
        )));
    }
    Ok(scene.retain(|i| {
        let level = scene.levels[i] as u32;
        if level == 1 {
            return true;
        }
        match camera.project(scene.positions[i]) {
            Some(p) => scene.opacity(i) * spec.weight(p, level) >= spec.threshold,
            None => false,
        }
    }))
}
