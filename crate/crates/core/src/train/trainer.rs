use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adc::{densify_and_prune, AdcReport, AdcStats};
use super::loss::{level_targets, loss_grad, LossParts};
use super::optim::{exponential_decay, LearningRates, SceneOptimizer};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::imgproc::{reduce_times, ImageBuffer, ReduceKernel};
use crate::model::{logit, Camera, ColorMode, GaussianScene, SH_C0};
use crate::render::{ForwardState, RenderOptions};

/// A full-resolution training or holdout image with its camera.
#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    pub image: ImageBuffer,
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub loss: f64,
    pub loss_im: f64,
    pub loss_dft: f64,
    pub n_gaussians: usize,
    pub n_per_level: Vec<usize>,
    pub psnr_holdout: Option<f64>,
}

/// Writes `rows` as CSV: `step,loss,loss_im,loss_dft,n_gaussians,n_level_1..n_level_L,psnr_holdout`.
pub fn write_metrics_csv(rows: &[MetricsRow], levels: u32, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["step", "loss", "loss_im", "loss_dft", "n_gaussians"].map(String::from).to_vec();
    header.extend((1..=levels).map(|k| format!("n_level_{k}")));
    header.push("psnr_holdout".into());
    let csv_err = |e: csv::Error| Error::Invalid(format!("metrics csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.step.to_string(),
            r.loss.to_string(),
            r.loss_im.to_string(),
            r.loss_dft.to_string(),
            r.n_gaussians.to_string(),
        ];
        rec.extend((0..levels as usize).map(|k| r.n_per_level.get(k).copied().unwrap_or(0).to_string()));
        rec.push(r.psnr_holdout.map(|p| p.to_string()).unwrap_or_default());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("metrics csv: {e}")))?;
    Ok(())
}

pub fn save_metrics_csv(rows: &[MetricsRow], levels: u32, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics_csv(rows, levels, std::io::BufWriter::new(f))
}

/// Training images and cameras at the current phase resolution.
#[derive(Clone, Debug)]
struct Phase {
    cameras: Vec<Camera>,
    targets: Vec<Vec<ImageBuffer>>,
    holdout_cameras: Vec<Camera>,
    holdout_images: Vec<ImageBuffer>,
}

/// Mutable training state besides the scene.
#[derive(Clone, Debug)]
pub struct TrainState {
    /// Index of the next step to run.
    pub step: u64,
    /// Number of active levels `m`.
    pub active_levels: u32,
    /// Current training resolution `(width, height)`.
    pub resolution: (usize, usize),
    pub optimizer: SceneOptimizer,
    pub adc: AdcStats,
    /// Step at which the most recent level was introduced.
    pub last_level_step: Option<u64>,
    /// Scene extent used for learning-rate scaling and split decisions.
    pub extent: f64,
    pub metrics: Vec<MetricsRow>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl TrainState {
    pub fn new(scene: &GaussianScene, cfg: &TrainConfig, full_resolution: (usize, usize), extent: f64) -> Self {
        let halvings = cfg.levels - 1;
        Self {
            step: 0,
            active_levels: 1,
            resolution: (full_resolution.0 >> halvings, full_resolution.1 >> halvings),
            optimizer: SceneOptimizer::new(scene),
            adc: AdcStats::new(scene.len()),
            last_level_step: None,
            extent,
            metrics: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0ade),
            order: Vec::new(),
            cursor: 0,
        }
    }

    /// Whether density control may run at the current step.
    pub fn adc_active(&self, cfg: &TrainConfig) -> bool {
        match self.last_level_step {
            Some(s) => self.step > s + cfg.refine_pause,
            None => true,
        }
    }

    pub fn learning_rates(&self, cfg: &TrainConfig) -> LearningRates {
        let since = self.step - self.last_level_step.unwrap_or(0);
        LearningRates {
            position: exponential_decay(
                cfg.lr_position * self.extent,
                cfg.lr_position_final * self.extent,
                since,
                cfg.lr_position_steps,
            ),
            rotation: cfg.lr_rotation,
            scale: cfg.lr_scale,
            opacity: cfg.lr_opacity,
            sh: cfg.lr_sh,
        }
    }
}

pub fn render_options(cfg: &TrainConfig) -> RenderOptions {
    RenderOptions {
        aa_opacity: cfg.aa_opacity,
        color_mode: if cfg.residual_colors {
            ColorMode::Residual
        } else {
            ColorMode::Plain
        },
        deterministic: cfg.deterministic,
    }
}

/// Introduces the next level when `state.step` is a multiple of the level
/// interval: the scene doubles, moments and statistics reset, the
/// resolution doubles and density control pauses. Returns whether a level
/// was added.
pub fn advance_schedule(scene: &mut GaussianScene, state: &mut TrainState, cfg: &TrainConfig) -> Result<bool> {
    if state.active_levels >= cfg.levels || state.step == 0 || state.step % cfg.level_interval != 0 {
        return Ok(false);
    }
    let next = state.active_levels + 1;
    *scene = scene.introduce_level_with_opacity(next, cfg.clone_opacity)?;
    state.active_levels = next;
    state.resolution = (state.resolution.0 * 2, state.resolution.1 * 2);
    state.optimizer = SceneOptimizer::new(scene);
    state.adc.reset(scene.len());
    state.last_level_step = Some(state.step);
    Ok(true)
}

/// One optimization step on a single view whose per-level targets match
/// the current phase. Returns the loss parts evaluated before the update.
pub fn train_step(
    scene: &mut GaussianScene,
    state: &mut TrainState,
    camera: &Camera,
    targets: &[ImageBuffer],
    cfg: &TrainConfig,
) -> Result<LossParts> {
    let opts = render_options(cfg);
    let m = state.active_levels;
    if targets.len() != m as usize {
        return Err(Error::Invalid(format!("{} targets for {m} active levels", targets.len())));
    }
    let levels: Vec<u32> = (1..=m).collect();
    let fwd = ForwardState::new(scene, camera, &levels, &opts)?;
    let renders: Vec<ImageBuffer> = levels.iter().map(|&k| fwd.image(k).expect("rendered").clone()).collect();
    let (parts, grads) = loss_grad(&renders, targets, cfg)?;
    if !parts.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: state.step,
            parts: format!("{parts:?}"),
        });
    }
    let upstream: Vec<(u32, &ImageBuffer)> = levels.iter().copied().zip(grads.iter()).collect();
    let g = fwd.backward(scene, &upstream)?;
    if !g.all_finite() {
        return Err(Error::NonFiniteLoss {
            step: state.step,
            parts: format!("non-finite gradient; {parts:?}"),
        });
    }
    state.adc.accumulate(&g);
    let lr = state.learning_rates(cfg);
    state.optimizer.step(scene, &g, &lr);
    scene.normalize_rotations();
    Ok(parts)
}

/// `count` random level-1 Gaussians in a ball, scaled by nearest-neighbour
/// spacing.
pub fn random_init(cfg: &TrainConfig, background: [f64; 3]) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scene = GaussianScene::empty(cfg.levels, cfg.sh_degree, background);
    let mut pts = Vec::with_capacity(cfg.init_count);
    while pts.len() < cfg.init_count {
        let p: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            pts.push(p.map(|v| v * cfg.init_radius));
        }
    }
    let nb = scene.coeffs_per_gaussian() / 3;
    for (i, p) in pts.iter().enumerate() {
        // mean distance to the three nearest neighbours
        let mut d: Vec<f64> = pts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
            .collect();
        d.sort_by(f64::total_cmp);
        let k = d.len().min(3);
        let spacing = if k == 0 {
            cfg.init_radius * 0.1
        } else {
            d[..k].iter().sum::<f64>() / k as f64
        };
        let mut sh = vec![0.0; 3 * nb];
        for c in 0..3 {
            sh[c * nb] = (rng.gen_range(0.0..1.0) - 0.5) / SH_C0;
        }
        scene.push(*p, [1.0, 0.0, 0.0, 0.0], [spacing.max(1e-7).ln(); 3], logit(0.1), &sh, 1);
    }
    scene
}

/// Radius of the camera centres around their mean, times 1.1.
pub fn camera_extent(cameras: &[Camera]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<[f64; 3]> = cameras.iter().map(Camera::center).collect();
    let n = centers.len() as f64;
    let mean = [0, 1, 2].map(|a| centers.iter().map(|c| c[a]).sum::<f64>() / n);
    let r = centers
        .iter()
        .map(|c| ((c[0] - mean[0]).powi(2) + (c[1] - mean[1]).powi(2) + (c[2] - mean[2]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    if r > 0.0 {
        1.1 * r
    } else {
        1.0
    }
}

/// Owns the scene, training data and state of a full progressive run.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub scene: GaussianScene,
    pub state: TrainState,
    train: Vec<View>,
    holdout: Vec<View>,
    phase: Phase,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, scene: GaussianScene, train: Vec<View>, holdout: Vec<View>) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::Invalid("no training views".into()));
        }
        let (w, h) = (train[0].image.width(), train[0].image.height());
        let div = 1usize << (cfg.levels - 1);
        for v in train.iter().chain(&holdout) {
            if v.image.width() != w || v.image.height() != h {
                return Err(Error::Invalid("training images differ in size".into()));
            }
            if v.camera.width != w || v.camera.height != h {
                return Err(Error::Invalid("camera and image sizes differ".into()));
            }
            v.camera.validate()?;
        }
        for (dim, size) in [("width", w), ("height", h)] {
            if size % div != 0 {
                return Err(Error::Invalid(format!("image {dim} {size} is not divisible by {div}")));
            }
        }
        if scene.num_levels != cfg.levels {
            return Err(Error::Config(format!(
                "scene has {} levels, config {}",
                scene.num_levels, cfg.levels
            )));
        }
        scene.validate()?;
        let cams: Vec<Camera> = train.iter().map(|v| v.camera.clone()).collect();
        let state = TrainState::new(&scene, &cfg, (w, h), camera_extent(&cams));
        let phase = build_phase(&train, &holdout, cfg.levels, 1)?;
        Ok(Self {
            cfg,
            scene,
            state,
            train,
            holdout,
            phase,
        })
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.cfg.total_steps
    }

    /// Runs one step including schedule, density control and logging.
    pub fn step(&mut self) -> Result<&MetricsRow> {
        let cfg = &self.cfg;
        if advance_schedule(&mut self.scene, &mut self.state, cfg)? {
            self.phase = build_phase(&self.train, &self.holdout, cfg.levels, self.state.active_levels)?;
        }
        if self.state.cursor >= self.state.order.len() {
            self.state.order = (0..self.train.len()).collect();
            self.state.order.shuffle(&mut self.state.rng);
            self.state.cursor = 0;
        }
        let vi = self.state.order[self.state.cursor];
        self.state.cursor += 1;
        let parts = train_step(
            &mut self.scene,
            &mut self.state,
            &self.phase.cameras[vi],
            &self.phase.targets[vi],
            cfg,
        )?;

        let s = self.state.step;
        if self.state.adc_active(cfg)
            && s >= cfg.densify_from
            && s < cfg.densify_until
            && (s + 1) % cfg.densify_interval == 0
        {
            let extent = self.state.extent;
            let st = &mut self.state;
            let _: AdcReport = densify_and_prune(&mut self.scene, &mut st.optimizer, &mut st.adc, cfg, extent, &mut st.rng);
        }

        let last = s + 1 == cfg.total_steps;
        let psnr = if !self.holdout.is_empty() && (last || (cfg.eval_interval > 0 && (s + 1) % cfg.eval_interval == 0)) {
            Some(self.holdout_psnr()?)
        } else {
            None
        };
        let counts = self.scene.counts_per_level();
        self.state.metrics.push(MetricsRow {
            step: s,
            loss: parts.total,
            loss_im: parts.im,
            loss_dft: parts.dft,
            n_gaussians: self.scene.len(),
            n_per_level: (1..=cfg.levels as usize).map(|k| counts.get(k - 1).copied().unwrap_or(0)).collect(),
            psnr_holdout: psnr,
        });
        self.state.step += 1;
        Ok(self.state.metrics.last().expect("just pushed"))
    }

    /// Runs to `total_steps`, passing each metrics row to `report`.
    pub fn run(&mut self, mut report: impl FnMut(&MetricsRow)) -> Result<()> {
        while !self.is_done() {
            let row = self.step()?;
            report(row);
        }
        Ok(())
    }

    /// Mean PSNR of the top active level over holdout views at the current
    /// training resolution.
    pub fn holdout_psnr(&self) -> Result<f64> {
        let opts = render_options(&self.cfg);
        let m = self.state.active_levels;
        let mut sum = 0.0;
        for (cam, gt) in self.phase.holdout_cameras.iter().zip(&self.phase.holdout_images) {
            let img = ForwardState::new(&self.scene, cam, &[m], &opts)?;
            sum += img.image(m).expect("rendered").psnr(gt)?;
        }
        Ok(sum / self.phase.holdout_cameras.len().max(1) as f64)
    }

    pub fn into_scene(self) -> GaussianScene {
        self.scene
    }
}

fn build_phase(train: &[View], holdout: &[View], levels: u32, m: u32) -> Result<Phase> {
    let halvings = (levels - m) as usize;
    let kernel = ReduceKernel::default();
    let mut phase = Phase {
        cameras: Vec::with_capacity(train.len()),
        targets: Vec::with_capacity(train.len()),
        holdout_cameras: Vec::new(),
        holdout_images: Vec::new(),
    };
    for v in train {
        let gt = reduce_times(&v.image, &kernel, halvings)?;
        phase.targets.push(level_targets(&gt, m)?);
        phase.cameras.push(v.camera.downscaled(halvings as u32));
    }
    for v in holdout {
        phase.holdout_images.push(reduce_times(&v.image, &kernel, halvings)?);
        phase.holdout_cameras.push(v.camera.downscaled(halvings as u32));
    }
    Ok(phase)
}
