use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logit, GaussianScene, SH_C0};

/// Names accepted by [`FilterRecipe::preset`].
pub const PRESETS: [&str; 3] = ["brush", "xray", "sharp"];

const BRUSH_JITTER: f64 = 0.01;
const OPACITY_LIMIT: f64 = 1e-6;

/// Edits applied to every Gaussian of one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelTransform {
    pub level: u32,
    /// Per-channel factor on the level's native color (raw for level 1,
    /// signed residual above).
    pub scale: [f64; 3],
    pub offset: [f64; 3],
    pub opacity: Option<f64>,
    /// Standard deviation of the position jitter in world units.
    pub jitter: Option<f64>,
    pub drop: bool,
}

impl Default for LevelTransform {
    fn default() -> Self {
        Self {
            level: 1,
            scale: [1.0; 3],
            offset: [0.0; 3],
            opacity: None,
            jitter: None,
            drop: false,
        }
    }
}

impl LevelTransform {
    fn at(level: u32) -> Self {
        Self { level, ..Self::default() }
    }

    fn offset(level: u32, o: f64) -> Self {
        Self {
            offset: [o; 3],
            ..Self::at(level)
        }
    }
}

/// Per-level artistic edits.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterRecipe {
    pub levels: Vec<LevelTransform>,
}

impl FilterRecipe {
    /// A named preset restricted to levels `1..=num_levels`.
    pub fn preset(name: &str, num_levels: u32) -> Result<Self> {
        let all = match name {
            "brush" => {
                let mut v: Vec<LevelTransform> = [(2, 0.2), (3, -0.2), (4, 0.2), (5, -0.2)]
                    .into_iter()
                    .map(|(l, o)| LevelTransform::offset(l, o))
                    .collect();
                v.iter_mut().for_each(|t| t.jitter = Some(BRUSH_JITTER));
                v
            }
            "xray" => {
                let shade = |l| LevelTransform {
                    scale: [0.0; 3],
                    offset: [0.05, 0.05, 0.25],
                    ..LevelTransform::at(l)
                };
                vec![
                    shade(1),
                    shade(2),
                    LevelTransform::offset(3, 0.1),
                    LevelTransform::offset(4, 0.25),
                    LevelTransform::offset(5, 0.25),
                ]
            }
            "sharp" => {
                let mut v = vec![LevelTransform {
                    drop: true,
                    ..LevelTransform::at(2)
                }];
                for l in 3..=5 {
                    v.push(LevelTransform {
                        opacity: Some(1.0),
                        offset: [if l == 5 { -0.1 } else { 0.0 }; 3],
                        ..LevelTransform::at(l)
                    });
                }
                v
            }
            _ => return Err(Error::Invalid(format!("unknown preset '{name}' (known: {})", PRESETS.join(", ")))),
        };
        Ok(Self {
            levels: all.into_iter().filter(|t| t.level <= num_levels).collect(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self, num_levels: u32) -> Result<()> {
        let mut seen = vec![false; num_levels as usize + 1];
        for t in &self.levels {
            if t.level < 1 || t.level > num_levels {
                return Err(Error::LevelOutOfRange {
                    level: t.level,
                    max: num_levels,
                });
            }
            if std::mem::replace(&mut seen[t.level as usize], true) {
                return Err(Error::Invalid(format!("level {} listed twice", t.level)));
            }
            if let Some(j) = t.jitter {
                if !(j >= 0.0 && j.is_finite()) {
                    return Err(Error::Invalid(format!("jitter {j} must be finite and >= 0")));
                }
            }
            if let Some(a) = t.opacity {
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::Invalid(format!("opacity {a} outside [0, 1]")));
                }
            }
            if t.scale.iter().chain(&t.offset).any(|v| !v.is_finite()) {
                return Err(Error::Invalid("color scale and offset must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Seed for one Gaussian's jitter, a function of its own parameters so that
/// results do not depend on scene order.
fn gaussian_seed(seed: u64, scene: &GaussianScene, i: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    let words = scene.positions[i]
        .iter()
        .chain(&scene.log_scales[i])
        .chain(&scene.rotations[i])
        .map(|v| v.to_bits())
        .chain([scene.levels[i] as u64]);
    for w in words {
        h = (h ^ w).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

/// Applies `recipe` per level. Untouched levels are copied bit for bit.
pub fn apply_recipe(scene: &GaussianScene, recipe: &FilterRecipe, seed: u64) -> Result<GaussianScene> {
    recipe.validate(scene.num_levels)?;
    let mut by_level: Vec<Option<&LevelTransform>> = vec![None; 256];
    for t in &recipe.levels {
        by_level[t.level as usize] = Some(t);
    }
    let dropped: Vec<usize> = (0..scene.len())
        .filter(|&i| !by_level[scene.levels[i] as usize].is_some_and(|t| t.drop))
        .collect();
    let mut out = scene.select(&dropped);
    let nb = out.coeffs_per_gaussian() / 3;
    for i in 0..out.len() {
        let level = out.levels[i] as u32;
        let Some(t) = by_level[level as usize] else {
            continue;
        };
        if let Some(sigma) = t.jitter.filter(|&s| s > 0.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(gaussian_seed(seed, &out, i));
            let normal = Normal::new(0.0, sigma).expect("validated sigma");
            for a in 0..3 {
                out.positions[i][a] += normal.sample(&mut rng);
            }
        }
        for c in 0..3 {
            let (s, o) = (t.scale[c], t.offset[c]);
            if s == 1.0 && o == 0.0 {
                continue;
            }
            // raw = 0.5 + C0 dc; the residual is 2 raw - 1
            let shift = if level == 1 { (0.5 * s + o - 0.5) / SH_C0 } else { o / (2.0 * SH_C0) };
            let sh = out.sh_of_mut(i);
            sh[c * nb] = s * sh[c * nb] + shift;
            for b in 1..nb {
                sh[c * nb + b] *= s;
            }
        }
        if let Some(a) = t.opacity {
            out.opacity_logits[i] = logit(a.clamp(OPACITY_LIMIT, 1.0 - OPACITY_LIMIT));
        }
    }
    Ok(out)
}
