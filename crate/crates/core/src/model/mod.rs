//! The level-tagged Gaussian scene, camera model, covariance construction,
//! residual color evaluation and the `.fags` model file.

mod camera;
mod color;
mod covariance;
mod io;

pub use camera::Camera;
pub use color::{eval_color, eval_raw, sh_basis, ColorMode, SH_C0, SH_C1};
pub use covariance::{build_covariance, quat_to_rotation, Mat3};
pub use io::{load_model, read_model, save_model, scene_to_json, write_model, MAGIC, VERSION};

use crate::error::{Error, Result};

/// Default clone opacity on level introduction.
pub const CLONE_OPACITY: f64 = 0.1;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Number of SH basis functions per channel for a degree.
pub fn basis_count(degree: u32) -> usize {
    ((degree + 1) * (degree + 1)) as usize
}

/// Structure-of-arrays Gaussian scene. Every array has one entry per
/// Gaussian; `sh` holds `3 * basis_count(sh_degree)` values per Gaussian,
/// channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianScene {
    pub positions: Vec<[f64; 3]>,
    /// Unit quaternions `(w, x, y, z)`.
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    pub sh: Vec<f64>,
    /// Frequency level, `1..=num_levels`.
    pub levels: Vec<u8>,
    pub sh_degree: u32,
    /// Configured level count `L`.
    pub num_levels: u32,
    pub background: [f64; 3],
}

impl GaussianScene {
    pub fn empty(num_levels: u32, sh_degree: u32, background: [f64; 3]) -> Self {
        Self {
            positions: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            levels: Vec::new(),
            sh_degree,
            num_levels,
            background,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn coeffs_per_gaussian(&self) -> usize {
        3 * basis_count(self.sh_degree)
    }

    #[inline]
    pub fn sh_of(&self, i: usize) -> &[f64] {
        let n = self.coeffs_per_gaussian();
        &self.sh[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn sh_of_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.coeffs_per_gaussian();
        &mut self.sh[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    /// Highest level present, 0 for an empty scene.
    pub fn max_level(&self) -> u32 {
        self.levels.iter().copied().max().unwrap_or(0) as u32
    }

    pub fn count_at_level(&self, level: u32) -> usize {
        self.levels.iter().filter(|&&l| l as u32 == level).count()
    }

    /// Gaussian count per level `1..=num_levels`.
    pub fn counts_per_level(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_levels as usize];
        for &l in &self.levels {
            out[l as usize - 1] += 1;
        }
        out
    }

    /// Appends one Gaussian; `sh` must hold `coeffs_per_gaussian()` values.
    pub fn push(&mut self, position: [f64; 3], rotation: [f64; 4], log_scale: [f64; 3], opacity_logit: f64, sh: &[f64], level: u8) {
        assert_eq!(sh.len(), self.coeffs_per_gaussian());
        self.positions.push(position);
        self.rotations.push(rotation);
        self.log_scales.push(log_scale);
        self.opacity_logits.push(opacity_logit);
        self.sh.extend_from_slice(sh);
        self.levels.push(level);
    }

    /// Copies Gaussian `i` of `other` onto the end of `self`.
    pub fn push_from(&mut self, other: &GaussianScene, i: usize) {
        self.push(
            other.positions[i],
            other.rotations[i],
            other.log_scales[i],
            other.opacity_logits[i],
            other.sh_of(i),
            other.levels[i],
        );
    }

    /// New scene holding the given Gaussians in the given order.
    pub fn select(&self, indices: &[usize]) -> GaussianScene {
        let mut out = GaussianScene::empty(self.num_levels, self.sh_degree, self.background);
        for &i in indices {
            out.push_from(self, i);
        }
        out
    }

    pub fn retain(&self, keep: impl Fn(usize) -> bool) -> GaussianScene {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select(&idx)
    }

    /// Appends every Gaussian of `other`.
    pub fn extend(&mut self, other: &GaussianScene) {
        for i in 0..other.len() {
            self.push_from(other, i);
        }
    }

    /// Rounds every parameter to the nearest `f32`, the precision of the
    /// model file.
    pub fn quantize_f32(&mut self) {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        self.positions.iter_mut().flatten().for_each(q);
        self.rotations.iter_mut().flatten().for_each(q);
        self.log_scales.iter_mut().flatten().for_each(q);
        self.opacity_logits.iter_mut().for_each(q);
        self.sh.iter_mut().for_each(q);
        self.background.iter_mut().for_each(q);
    }

    pub fn normalize_rotations(&mut self) {
        for q in &mut self.rotations {
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if n > 0.0 {
                q.iter_mut().for_each(|v| *v /= n);
            } else {
                *q = [1.0, 0.0, 0.0, 0.0];
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.rotations.len() != n
            || self.log_scales.len() != n
            || self.opacity_logits.len() != n
            || self.levels.len() != n
            || self.sh.len() != n * self.coeffs_per_gaussian()
        {
            return Err(Error::Invalid("scene arrays have inconsistent lengths".into()));
        }
        if self.sh_degree > 1 {
            return Err(Error::Invalid(format!("sh degree {} > 1 unsupported", self.sh_degree)));
        }
        if self.num_levels == 0 || self.num_levels > u8::MAX as u32 {
            return Err(Error::Invalid(format!("level count {} invalid", self.num_levels)));
        }
        if let Some(&l) = self.levels.iter().find(|&&l| l == 0 || l as u32 > self.num_levels) {
            return Err(Error::LevelOutOfRange {
                level: l as u32,
                max: self.num_levels,
            });
        }
        let finite = self.positions.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.sh.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("non-finite scene parameter".into()));
        }
        Ok(())
    }

    /// Duplicates every Gaussian and tags the copies with `new_level`.
    ///
    /// Copies keep geometry; their SH is zeroed (raw color 0.5, residual 0)
    /// and their opacity reset to [`CLONE_OPACITY`].
    pub fn introduce_level(&self, new_level: u32) -> Result<GaussianScene> {
        self.introduce_level_with_opacity(new_level, CLONE_OPACITY)
    }

    pub fn introduce_level_with_opacity(&self, new_level: u32, clone_opacity: f64) -> Result<GaussianScene> {
        if new_level < 2 || new_level > self.num_levels {
            return Err(Error::LevelOutOfRange {
                level: new_level,
                max: self.num_levels,
            });
        }
        if !self.is_empty() && new_level != self.max_level() + 1 {
            return Err(Error::LevelSequence {
                expected: self.max_level() + 1,
                got: new_level,
            });
        }
        let mut out = self.clone();
        let zero_sh = vec![0.0; self.coeffs_per_gaussian()];
        let opacity_logit = logit(clone_opacity);
        for i in 0..self.len() {
            out.push(
                self.positions[i],
                self.rotations[i],
                self.log_scales[i],
                opacity_logit,
                &zero_sh,
                new_level as u8,
            );
        }
        Ok(out)
    }

    /// Indices of Gaussians with level `<= k`, in scene order.
    pub fn level_indices(&self, k: u32) -> Result<Vec<usize>> {
        let max = self.max_level().max(1);
        if k < 1 || k > max.max(self.num_levels) {
            return Err(Error::LevelOutOfRange { level: k, max });
        }
        Ok((0..self.len()).filter(|&i| self.levels[i] as u32 <= k).collect())
    }

    /// The sub-scene of Gaussians with level `<= k`, order preserved.
    pub fn level_subset(&self, k: u32) -> Result<GaussianScene> {
        Ok(self.select(&self.level_indices(k)?))
    }

    /// Mean of the three axis scales of each Gaussian.
    pub fn mean_scales(&self) -> Vec<f64> {
        self.log_scales
            .iter()
            .map(|s| s.iter().map(|v| v.exp()).sum::<f64>() / 3.0)
            .collect()
    }
}
