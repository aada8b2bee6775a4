use crate::model::GaussianScene;
use crate::render::RenderGrads;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Adam state for one parameter array stored as rows of `width` scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamGroup {
    pub width: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamGroup {
    pub fn new(width: usize, rows: usize) -> Self {
        Self {
            width,
            m: vec![0.0; width * rows],
            v: vec![0.0; width * rows],
            t: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.m.len() / self.width
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        if lr == 0.0 {
            for ((m, v), g) in self.m.iter_mut().zip(&mut self.v).zip(grads) {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            }
            return;
        }
        for (((p, m), v), g) in params.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(grads) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (vh.sqrt() + EPSILON);
        }
    }

    /// Rebuilds rows: `Some(i)` keeps row `i`'s moments, `None` starts at zero.
    pub fn remap(&mut self, rows: &[Option<usize>]) {
        let w = self.width;
        let mut m = Vec::with_capacity(rows.len() * w);
        let mut v = Vec::with_capacity(rows.len() * w);
        for r in rows {
            match r {
                Some(i) => {
                    m.extend_from_slice(&self.m[i * w..(i + 1) * w]);
                    v.extend_from_slice(&self.v[i * w..(i + 1) * w]);
                }
                None => {
                    m.extend(std::iter::repeat(0.0).take(w));
                    v.extend(std::iter::repeat(0.0).take(w));
                }
            }
        }
        self.m = m;
        self.v = v;
    }
}

/// Per-group learning rates for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub sh: f64,
}

/// Log-linear interpolation from `start` to `end` over `steps`, held at
/// `end` afterwards.
pub fn exponential_decay(start: f64, end: f64, step: u64, steps: u64) -> f64 {
    if steps == 0 || start <= 0.0 || end <= 0.0 {
        return if step == 0 { start } else { end };
    }
    let t = (step as f64 / steps as f64).clamp(0.0, 1.0);
    (start.ln() * (1.0 - t) + end.ln() * t).exp()
}

/// Adam over every learnable array of a [`GaussianScene`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneOptimizer {
    pub positions: AdamGroup,
    pub rotations: AdamGroup,
    pub log_scales: AdamGroup,
    pub opacity_logits: AdamGroup,
    pub sh: AdamGroup,
}

impl SceneOptimizer {
    pub fn new(scene: &GaussianScene) -> Self {
        let n = scene.len();
        Self {
            positions: AdamGroup::new(3, n),
            rotations: AdamGroup::new(4, n),
            log_scales: AdamGroup::new(3, n),
            opacity_logits: AdamGroup::new(1, n),
            sh: AdamGroup::new(scene.coeffs_per_gaussian(), n),
        }
    }

    pub fn rows(&self) -> usize {
        self.positions.rows()
    }

    pub fn step(&mut self, scene: &mut GaussianScene, g: &RenderGrads, lr: &LearningRates) {
        self.positions
            .step(scene.positions.as_flattened_mut(), g.positions.as_flattened(), lr.position);
        self.rotations
            .step(scene.rotations.as_flattened_mut(), g.rotations.as_flattened(), lr.rotation);
        self.log_scales
            .step(scene.log_scales.as_flattened_mut(), g.log_scales.as_flattened(), lr.scale);
        self.opacity_logits.step(&mut scene.opacity_logits, &g.opacity_logits, lr.opacity);
        self.sh.step(&mut scene.sh, &g.sh, lr.sh);
    }

    pub fn remap(&mut self, rows: &[Option<usize>]) {
        self.positions.remap(rows);
        self.rotations.remap(rows);
        self.log_scales.remap(rows);
        self.opacity_logits.remap(rows);
        self.sh.remap(rows);
    }
}
