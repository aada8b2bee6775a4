use serde::Serialize;

use super::View;
use crate::error::Result;
use crate::imgproc::{lowpass_gt, ssim, ImageBuffer};
use crate::model::GaussianScene;
use crate::render::{render_all_levels, RenderOptions};

/// Per-level image quality averaged over a set of views.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: u32,
    pub gaussians: usize,
    /// Against the full-resolution ground truth.
    pub psnr: f64,
    pub ssim: f64,
    /// Against the level's low-pass target.
    pub psnr_lowpass: f64,
    pub ssim_lowpass: f64,
}

fn mean_psnr(pairs: &[(ImageBuffer, &ImageBuffer)]) -> Result<f64> {
    // averaging in MSE keeps the result finite unless every view is exact
    let mut mse = 0.0;
    for (a, b) in pairs {
        mse += a.mse(b)?;
    }
    mse /= pairs.len().max(1) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Renders every level for each view, rounds it to 8 bits like a saved
/// PNG and scores it against the view's image and against the low-pass
/// target of that level.
pub fn evaluate_levels(scene: &GaussianScene, views: &[View], levels: u32, opts: &RenderOptions) -> Result<Vec<LevelReport>> {
    let counts = scene.counts_per_level();
    let mut per_level: Vec<Vec<ImageBuffer>> = vec![Vec::new(); levels as usize];
    for v in views {
        let set = render_all_levels(scene, &v.camera, levels, opts)?;
        for (k, img) in set.images.into_iter().enumerate() {
            per_level[k].push(img.quantized());
        }
    }
    let mut out = Vec::with_capacity(levels as usize);
    for k in 1..=levels {
        let renders = std::mem::take(&mut per_level[k as usize - 1]);
        let mut full = Vec::new();
        let mut low = Vec::new();
        let (mut s_full, mut s_low) = (0.0, 0.0);
        let targets = views.iter().map(|v| lowpass_gt(&v.image, levels, k)).collect::<Result<Vec<_>>>()?;
        for ((r, v), t) in renders.into_iter().zip(views).zip(&targets) {
            s_full += ssim(&v.image, &r)?;
            s_low += ssim(t, &r)?;
            low.push((r.clone(), t));
            full.push((r, &v.image));
        }
        let n = views.len().max(1) as f64;
        out.push(LevelReport {
            level: k,
            gaussians: counts.iter().take(k as usize).sum(),
            psnr: mean_psnr(&full)?,
            ssim: s_full / n,
            psnr_lowpass: mean_psnr(&low)?,
            ssim_lowpass: s_low / n,
        });
    }
    Ok(out)
}
