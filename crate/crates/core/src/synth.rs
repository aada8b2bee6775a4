//! Synthetic ground-truth scenes, camera rigs and rendered datasets.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::ImageBuffer;
use crate::model::{logit, save_model, Camera, GaussianScene, SH_C0};
use crate::render::{render_level, RenderOptions};
use crate::train::View;

/// Every `HOLDOUT_STRIDE`-th camera (starting at 0) is held out.
pub const HOLDOUT_STRIDE: usize = 8;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENE_FILE: &str = "scene.fags";

/// Random multi-level scene inside a ball of radius `extent`. Level 1 has
/// scales around `extent / 10` and colors in [0,1]; each further level
/// halves the scale and carries residual colors in [-0.5, 0.5].
pub fn make_scene(seed: u64, n_per_level: &[usize], levels: u32, extent: f64) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = GaussianScene::empty(levels.max(1), 0, [0.5; 3]);
    for (li, &count) in n_per_level.iter().enumerate().take(levels as usize) {
        let level = li as u32 + 1;
        let base = extent / 10.0 / (1u64 << li) as f64;
        for _ in 0..count {
            let pos = loop {
                let p: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                    break p.map(|v| v * extent);
                }
            };
            let rot: [f64; 4] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let ls = [0; 3].map(|_| (base * rng.gen_range(0.7f64..1.4)).ln());
            let raw: [f64; 3] = if level == 1 {
                [0; 3].map(|_| rng.gen_range(0.0..1.0))
            } else {
                [0; 3].map(|_| (rng.gen_range(-0.5..0.5) + 1.0) / 2.0)
            };
            let sh = raw.map(|c| (c - 0.5) / SH_C0);
            let alpha = rng.gen_range(0.4..0.9);
            scene.push(pos, rot, ls, logit(alpha), &sh, level as u8);
        }
    }
    scene.normalize_rotations();
    scene
}

/// `count` cameras on a ring of `radius` around `target` (world z up),
/// alternating above and below the ring plane so opposite cameras face
/// each other.
pub fn make_rig(seed: u64, count: usize, radius: f64, target: [f64; 3], width: usize, height: usize, focal: f64) -> Vec<Camera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let elevation = 20f64.to_radians();
    let half = count / 2;
    (0..count)
        .map(|i| {
            let az = phase + std::f64::consts::TAU * i as f64 / count as f64;
            let sign = if i < half || count % 2 == 1 {
                if i % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else if (i - half) % 2 == 0 {
                -1.0
            } else {
                1.0
            };
            let el = sign * elevation;
            let eye = [
                target[0] + radius * el.cos() * az.cos(),
                target[1] + radius * el.cos() * az.sin(),
                target[2] + radius * el.sin(),
            ];
            Camera::look_at(eye, target, [0.0, 0.0, 1.0], width, height, focal)
        })
        .collect()
}

/// Description of a rendered dataset; paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub scene: String,
    pub levels: u32,
    pub width: usize,
    pub height: usize,
    pub background: [f64; 3],
    pub extent: f64,
    pub cameras: Vec<Camera>,
    pub images: Vec<String>,
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

pub fn holdout_split(count: usize) -> (Vec<usize>, Vec<usize>) {
    (0..count).partition(|i| i % HOLDOUT_STRIDE != 0)
}

/// Renders the top level of the f32-rounded `scene` for each camera and
/// writes the model, PNGs and `manifest.json` into `dir`.
pub fn render_dataset(scene: &GaussianScene, cameras: &[Camera], dir: impl AsRef<Path>, seed: u64, extent: f64) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let first = cameras.first().ok_or_else(|| Error::Invalid("no cameras".into()))?;
    let (width, height) = (first.width, first.height);
    let levels = scene.num_levels.max(1);
    let div = 1usize << (levels - 1);
    if width % div != 0 || height % div != 0 {
        return Err(Error::Invalid(format!("resolution {width}x{height} is not divisible by {div}")));
    }
    for c in cameras {
        c.validate()?;
        if (c.width, c.height) != (width, height) {
            return Err(Error::Invalid("cameras differ in resolution".into()));
        }
    }
    fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(dir, e))?;
    // render exactly what the f32 model file holds
    let mut stored = scene.clone();
    stored.quantize_f32();
    let scene = &stored;
    save_model(scene, dir.join(SCENE_FILE))?;
    let opts = RenderOptions::default();
    let images: Vec<String> = (0..cameras.len()).map(|i| format!("images/view_{i:03}.png")).collect();
    cameras
        .par_iter()
        .zip(&images)
        .try_for_each(|(cam, name)| render_level(scene, cam, levels, &opts)?.save_png(dir.join(name)))?;
    let (train, holdout) = holdout_split(cameras.len());
    let manifest = DatasetManifest {
        seed,
        scene: SCENE_FILE.into(),
        levels,
        width,
        height,
        background: scene.background,
        extent,
        cameras: cameras.to_vec(),
        images,
        train,
        holdout,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A loaded dataset: manifest plus decoded train and holdout views.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub train: Vec<View>,
    pub holdout: Vec<View>,
}

impl Dataset {
    /// Loads from a manifest file or a directory containing one.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.images.len() != manifest.cameras.len() {
            return Err(Error::Invalid(format!(
                "manifest lists {} images for {} cameras",
                manifest.images.len(),
                manifest.cameras.len()
            )));
        }
        let view = |i: usize| -> Result<View> {
            let camera = manifest
                .cameras
                .get(i)
                .ok_or_else(|| Error::Invalid(format!("camera index {i} out of range")))?
                .clone();
            let image = ImageBuffer::load_png(root.join(&manifest.images[i]))?;
            if (image.width(), image.height()) != (manifest.width, manifest.height) {
                return Err(Error::Invalid(format!(
                    "{} is {}x{}, manifest says {}x{}",
                    manifest.images[i],
                    image.width(),
                    image.height(),
                    manifest.width,
                    manifest.height
                )));
            }
            Ok(View { camera, image })
        };
        let train = manifest.train.iter().map(|&i| view(i)).collect::<Result<_>>()?;
        let holdout = manifest.holdout.iter().map(|&i| view(i)).collect::<Result<_>>()?;
        Ok(Self {
            root,
            manifest,
            train,
            holdout,
        })
    }

    pub fn scene_path(&self) -> PathBuf {
        self.root.join(&self.manifest.scene)
    }
}

/// Parameters of a generated benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub seed: u64,
    pub levels: u32,
    pub n_per_level: Vec<usize>,
    pub extent: f64,
    pub cameras: usize,
    pub radius: f64,
    pub resolution: usize,
    /// Focal length as a multiple of the image width.
    pub focal_factor: f64,
}

impl Default for BenchmarkSpec {
    /// Three levels, 600 Gaussians, 24 cameras at 128x128.
    fn default() -> Self {
        Self {
            seed: 7,
            levels: 3,
            n_per_level: vec![200, 200, 200],
            extent: 1.0,
            cameras: 24,
            radius: 3.0,
            resolution: 128,
            focal_factor: 1.1,
        }
    }
}

impl BenchmarkSpec {
    pub fn scene(&self) -> GaussianScene {
        make_scene(self.seed, &self.n_per_level, self.levels, self.extent)
    }

    pub fn rig(&self) -> Vec<Camera> {
        let r = self.resolution;
        make_rig(self.seed, self.cameras, self.radius * self.extent, [0.0; 3], r, r, self.focal_factor * r as f64)
    }

    /// Generates the scene, renders it and writes the dataset into `dir`.
    pub fn generate(&self, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        render_dataset(&self.scene(), &self.rig(), dir, self.seed, self.extent)
    }
}
