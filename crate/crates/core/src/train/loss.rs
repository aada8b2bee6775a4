use serde::Serialize;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::imgproc::{dft_discrepancy, dft_discrepancy_grad, lowpass_gt, spatial_discrepancy, spatial_discrepancy_grad, ImageBuffer, ReduceKernel};

/// Named components of the training objective.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossParts {
    /// `lambda_im * im + lambda_dft * dft`.
    pub total: f64,
    /// Weighted sum of per-level spatial discrepancies.
    pub im: f64,
    /// Sum of per-level DFT discrepancies over all but the top active level.
    pub dft: f64,
    /// Unweighted spatial discrepancy of each active level.
    pub im_levels: Vec<f64>,
    /// DFT discrepancy of each active level (the top entry is always 0).
    pub dft_levels: Vec<f64>,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.im.is_finite() && self.dft.is_finite()
    }
}

/// Low-pass targets `I_1 .. I_m` of `gt`.
pub fn level_targets(gt: &ImageBuffer, m: u32) -> Result<Vec<ImageBuffer>> {
    (1..=m).map(|k| lowpass_gt(gt, m, k)).collect()
}

fn check(renders: &[ImageBuffer], targets: &[ImageBuffer]) -> Result<()> {
    if renders.len() != targets.len() || renders.is_empty() {
        return Err(Error::Invalid(format!("{} renders for {} targets", renders.len(), targets.len())));
    }
    for (r, t) in renders.iter().zip(targets) {
        t.same_dims(r)?;
    }
    Ok(())
}

/// Training objective for `m = renders.len()` active levels against `gt`.
pub fn total_loss(renders: &[ImageBuffer], gt: &ImageBuffer, cfg: &TrainConfig) -> Result<LossParts> {
    let targets = level_targets(gt, renders.len() as u32)?;
    loss_against(renders, &targets, cfg)
}

/// [`total_loss`] with precomputed [`level_targets`].
pub fn loss_against(renders: &[ImageBuffer], targets: &[ImageBuffer], cfg: &TrainConfig) -> Result<LossParts> {
    check(renders, targets)?;
    let m = renders.len() as u32;
    let kernel = ReduceKernel::default();
    let mut parts = LossParts::default();
    for (i, (r, t)) in renders.iter().zip(targets).enumerate() {
        let k = i as u32 + 1;
        let d = spatial_discrepancy(t, r, cfg.lambda_ssim, (m - k) as usize, &kernel)?;
        parts.im_levels.push(d);
        parts.im += cfg.level_weight(k, m) * d;
        let f = if k < m { dft_discrepancy(t, r)? } else { 0.0 };
        parts.dft_levels.push(f);
        parts.dft += f;
    }
    parts.total = cfg.lambda_im * parts.im + cfg.lambda_dft * parts.dft;
    Ok(parts)
}

/// Loss parts and the gradient of the total with respect to each render.
pub fn loss_grad(renders: &[ImageBuffer], targets: &[ImageBuffer], cfg: &TrainConfig) -> Result<(LossParts, Vec<ImageBuffer>)> {
    check(renders, targets)?;
    let m = renders.len() as u32;
    let kernel = ReduceKernel::default();
    let mut parts = LossParts::default();
    let mut grads = Vec::with_capacity(renders.len());
    for (i, (r, t)) in renders.iter().zip(targets).enumerate() {
        let k = i as u32 + 1;
        let wk = cfg.level_weight(k, m);
        let (d, mut g) = spatial_discrepancy_grad(t, r, cfg.lambda_ssim, (m - k) as usize, &kernel)?;
        g.scale(cfg.lambda_im * wk);
        parts.im_levels.push(d);
        parts.im += wk * d;
        let mut f = 0.0;
        if k < m && cfg.lambda_dft != 0.0 {
            let (v, mut fg) = dft_discrepancy_grad(t, r)?;
            fg.scale(cfg.lambda_dft);
            g.add_assign(&fg);
            f = v;
        } else if k < m {
            f = dft_discrepancy(t, r)?;
        }
        parts.dft_levels.push(f);
        parts.dft += f;
        grads.push(g);
    }
    parts.total = cfg.lambda_im * parts.im + cfg.lambda_dft * parts.dft;
    Ok((parts, grads))
}
