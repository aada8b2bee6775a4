use rand::Rng;
use rand_distr::StandardNormal;

use super::optim::SceneOptimizer;
use super::TrainConfig;
use crate::model::{quat_to_rotation, GaussianScene};
use crate::render::RenderGrads;

/// Scale divisor applied to both children of a split.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

/// Running screen-space gradient statistics per Gaussian.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdcStats {
    pub grad_sum: Vec<f64>,
    pub views: Vec<u32>,
}

impl AdcStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_sum: vec![0.0; n],
            views: vec![0; n],
        }
    }

    pub fn reset(&mut self, n: usize) {
        *self = Self::new(n);
    }

    pub fn accumulate(&mut self, g: &RenderGrads) {
        for i in 0..self.grad_sum.len() {
            if g.visible[i] {
                self.grad_sum[i] += g.screen_grad_norm[i];
                self.views[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.views[i] == 0 {
            0.0
        } else {
            self.grad_sum[i] / self.views[i] as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AdcReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Clones small and splits large high-gradient Gaussians, then prunes
/// transparent ones. Children keep their parent's level. Optimizer rows are
/// carried along (new rows start with zero moments) and statistics reset.
pub fn densify_and_prune(
    scene: &mut GaussianScene,
    opt: &mut SceneOptimizer,
    stats: &mut AdcStats,
    cfg: &TrainConfig,
    extent: f64,
    rng: &mut impl Rng,
) -> AdcReport {
    let n = scene.len();
    let split_above = cfg.split_scale_fraction * extent;
    let mut candidates: Vec<usize> = (0..n).filter(|&i| stats.mean(i) >= cfg.grad_threshold).collect();
    // under the cap, the strongest gradients win
    let room = cfg.max_gaussians.saturating_sub(n);
    if candidates.len() > room {
        candidates.sort_by(|&a, &b| stats.mean(b).total_cmp(&stats.mean(a)).then(a.cmp(&b)));
        candidates.truncate(room);
        candidates.sort_unstable();
    }
    let max_scale = |i: usize| scene.log_scales[i].iter().cloned().fold(f64::MIN, f64::max).exp();
    let (split, clone): (Vec<usize>, Vec<usize>) = candidates.into_iter().partition(|&i| max_scale(i) > split_above);

    let mut is_split = vec![false; n];
    split.iter().for_each(|&i| is_split[i] = true);
    let mut out = GaussianScene::empty(scene.num_levels, scene.sh_degree, scene.background);
    let mut rows = Vec::with_capacity(n + clone.len() + split.len());
    for i in (0..n).filter(|&i| !is_split[i]) {
        out.push_from(scene, i);
        rows.push(Some(i));
    }
    for &i in &clone {
        out.push_from(scene, i);
        rows.push(None);
    }
    for &i in &split {
        let r = quat_to_rotation(scene.rotations[i]);
        let s = scene.log_scales[i].map(f64::exp);
        for _ in 0..2 {
            let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let local = [s[0] * z[0], s[1] * z[1], s[2] * z[2]];
            out.push_from(scene, i);
            let j = out.len() - 1;
            for a in 0..3 {
                out.positions[j][a] += (0..3).map(|b| r[a][b] * local[b]).sum::<f64>();
                out.log_scales[j][a] -= SPLIT_SCALE_DIVISOR.ln();
            }
            rows.push(None);
        }
    }

    let keep: Vec<usize> = (0..out.len()).filter(|&j| out.opacity(j) >= cfg.prune_opacity).collect();
    let pruned = out.len() - keep.len();
    if pruned > 0 {
        out = out.select(&keep);
        rows = keep.iter().map(|&j| rows[j]).collect();
    }
    opt.remap(&rows);
    *scene = out;
    stats.reset(scene.len());
    AdcReport {
        cloned: clone.len(),
        split: split.len(),
        pruned,
    }
}
