use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Every knob of a training run. The flat `key = value` file format uses
/// the field names verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Final number of frequency levels.
    pub levels: u32,
    /// Steps between level introductions.
    pub level_interval: u64,
    pub total_steps: u64,
    pub lambda_im: f64,
    pub lambda_dft: f64,
    pub lambda_ssim: f64,
    /// Per-level image weight for every active level below the top one.
    pub lambda_lower: f64,
    /// Per-level image weight for the top active level.
    pub lambda_top: f64,
    /// Steps after a level introduction during which density control is off.
    pub refine_pause: u64,
    pub densify_interval: u64,
    pub densify_from: u64,
    pub densify_until: u64,
    /// Mean screen-space position gradient (per pixel) that triggers densification.
    pub grad_threshold: f64,
    /// Clone below, split above this fraction of the scene extent.
    pub split_scale_fraction: f64,
    pub prune_opacity: f64,
    /// Hard cap on the Gaussian count; densification stops at the cap.
    pub max_gaussians: usize,
    pub lr_position: f64,
    pub lr_position_final: f64,
    /// Steps over which the position rate decays, restarted at each level introduction.
    pub lr_position_steps: u64,
    pub lr_sh: f64,
    pub lr_opacity: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    /// Opacity given to the clones created when a level is introduced.
    pub clone_opacity: f64,
    /// Signed residual colors on levels >= 2; off reproduces the ablation.
    pub residual_colors: bool,
    pub aa_opacity: bool,
    pub sh_degree: u32,
    /// Number of random level-1 Gaussians at initialization.
    pub init_count: usize,
    /// Radius of the ball the initial Gaussians are drawn from.
    pub init_radius: f64,
    /// Holdout PSNR is evaluated every this many steps (0 = only at the end).
    pub eval_interval: u64,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            level_interval: 2500,
            total_steps: 30_000,
            lambda_im: 1.0,
            lambda_dft: 0.001,
            lambda_ssim: 0.2,
            lambda_lower: 0.1,
            lambda_top: 1.0,
            refine_pause: 300,
            densify_interval: 100,
            densify_from: 500,
            densify_until: 15_000,
            grad_threshold: 2e-4,
            split_scale_fraction: 0.01,
            prune_opacity: 0.005,
            max_gaussians: 200_000,
            lr_position: 1.6e-4,
            lr_position_final: 1.6e-6,
            lr_position_steps: 30_000,
            lr_sh: 2.5e-3,
            lr_opacity: 5e-2,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
            clone_opacity: crate::model::CLONE_OPACITY,
            residual_colors: true,
            aa_opacity: false,
            sh_degree: 1,
            init_count: 200,
            init_radius: 1.0,
            eval_interval: 500,
            seed: 0,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    /// Scaled-down benchmark configuration used by the acceptance runs.
    pub fn benchmark() -> Self {
        Self {
            level_interval: 800,
            total_steps: 8000,
            densify_from: 300,
            densify_until: 6000,
            grad_threshold: 1e-4,
            lr_position_steps: 8000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.levels < 1 {
            return bad("levels must be >= 1".into());
        }
        if self.levels > 255 {
            return bad(format!("levels = {} exceeds 255", self.levels));
        }
        if self.level_interval == 0 && self.levels > 1 {
            return bad("level_interval must be > 0".into());
        }
        if self.level_interval * (self.levels as u64 - 1) >= self.total_steps {
            return bad(format!(
                "level_interval * (levels - 1) = {} must be below total_steps = {}",
                self.level_interval * (self.levels as u64 - 1),
                self.total_steps
            ));
        }
        let lambdas = [
            ("lambda_im", self.lambda_im),
            ("lambda_dft", self.lambda_dft),
            ("lambda_ssim", self.lambda_ssim),
            ("lambda_lower", self.lambda_lower),
            ("lambda_top", self.lambda_top),
        ];
        for (name, v) in lambdas {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if self.lambda_ssim > 1.0 {
            return bad(format!("lambda_ssim = {} must be <= 1", self.lambda_ssim));
        }
        let rates = [
            ("lr_position", self.lr_position),
            ("lr_position_final", self.lr_position_final),
            ("lr_sh", self.lr_sh),
            ("lr_opacity", self.lr_opacity),
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if !(self.clone_opacity > 0.0 && self.clone_opacity < 1.0) {
            return bad(format!("clone_opacity = {} must lie in (0,1)", self.clone_opacity));
        }
        if !(self.prune_opacity >= 0.0 && self.prune_opacity < 1.0) {
            return bad(format!("prune_opacity = {} must lie in [0,1)", self.prune_opacity));
        }
        if self.sh_degree > 1 {
            return bad(format!("sh_degree = {} unsupported (max 1)", self.sh_degree));
        }
        if self.densify_interval == 0 {
            return bad("densify_interval must be > 0".into());
        }
        if !(self.init_radius > 0.0) {
            return bad("init_radius must be > 0".into());
        }
        Ok(())
    }

    /// Image weight of level `k` when `m` levels are active.
    pub fn level_weight(&self, k: u32, m: u32) -> f64 {
        if k == m {
            self.lambda_top
        } else {
            self.lambda_lower
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. Missing keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_pairs(parse_pairs(text)?)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    /// Overrides fields from `key = value` text.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        self.apply_pairs(parse_pairs(text)?)
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Overrides fields from `(key, value)` string pairs.
    pub fn apply_pairs<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: impl IntoIterator<Item = (K, V)>) -> Result<()> {
        let mut map = match serde_json::to_value(&*self)? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        for (k, v) in pairs {
            let (k, v) = (k.as_ref().trim(), v.as_ref().trim());
            let slot = map
                .get_mut(k)
                .ok_or_else(|| Error::Config(format!("unknown key `{k}`")))?;
            *slot = coerce(k, v, slot)?;
        }
        *self = serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// The resolved configuration as `key = value` lines, parseable by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let map: Map<String, Value> = match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        let mut out = String::new();
        for (k, v) in map {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn coerce(key: &str, v: &str, like: &Value) -> Result<Value> {
    let err = || Error::Config(format!("invalid value `{v}` for `{key}`"));
    Ok(match like {
        Value::Bool(_) => Value::Bool(v.parse().map_err(|_| err())?),
        Value::Number(n) if n.is_f64() => serde_json::Number::from_f64(v.parse().map_err(|_| err())?)
            .map(Value::Number)
            .ok_or_else(err)?,
        Value::Number(_) => Value::Number(v.parse::<u64>().map_err(|_| err())?.into()),
        _ => return Err(err()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_values() {
        let c = TrainConfig::default();
        assert_eq!(c.level_interval, 2500);
        assert_eq!(c.total_steps, 30_000);
        assert_eq!((c.lambda_im, c.lambda_dft, c.lambda_ssim), (1.0, 0.001, 0.2));
        assert_eq!((c.level_weight(1, 3), c.level_weight(2, 3), c.level_weight(3, 3)), (0.1, 0.1, 1.0));
        assert_eq!(c.refine_pause, 300);
        assert_eq!(c.prune_opacity, 0.005);
        c.validate().unwrap();
        TrainConfig::benchmark().validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::benchmark();
        c.lambda_dft = 0.0;
        c.residual_colors = false;
        c.seed = 17;
        c.lr_sh = 1.0 / 3.0;
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_with_comments_and_overrides() {
        let c = TrainConfig::parse("# run\nlevels = 2\n\ntotal_steps=100 # short\nlevel_interval = 40\nlambda_dft = 0\n").unwrap();
        assert_eq!((c.levels, c.total_steps, c.level_interval, c.lambda_dft), (2, 100, 40, 0.0));
        c.validate().unwrap();
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(TrainConfig::parse("nope = 1").is_err());
        assert!(TrainConfig::parse("levels = x").is_err());
        assert!(TrainConfig::parse("levels").is_err());
        assert!(TrainConfig::parse("levels = -1").is_err());
        assert!(TrainConfig::parse("levels = 0").unwrap().validate().is_err());
        assert!(TrainConfig::parse("lambda_dft = -1").unwrap().validate().is_err());
        let c = TrainConfig::parse("levels = 3\nlevel_interval = 50\ntotal_steps = 100").unwrap();
        assert!(c.validate().is_err());
    }
}
