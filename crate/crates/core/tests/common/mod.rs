//! Test-only oracles shared by the integration suites: a per-pixel renderer
//! with no tiling or shared projection code, scene builders, and central
//! finite differences.
#![allow(dead_code)]

use freqsplat::imgproc::ImageBuffer;
use freqsplat::model::{build_covariance, eval_color, logit, sigmoid, Camera, GaussianScene, SH_C0};
use freqsplat::render::RenderOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct evaluation of the blending sum at every pixel centre.
pub fn brute_force_render(scene: &GaussianScene, cam: &Camera, k: u32, opts: &RenderOptions) -> ImageBuffer {
    struct S {
        depth: f64,
        idx: usize,
        mean: [f64; 2],
        inv: [[f64; 2]; 2],
        alpha: f64,
        color: [f64; 3],
    }
    let center = cam.center();
    let mut splats = Vec::new();
    for i in 0..scene.len() {
        if scene.levels[i] as u32 > k {
            continue;
        }
        let p = scene.positions[i];
        let r = cam.rotation;
        let t: Vec<f64> = (0..3).map(|a| (0..3).map(|b| r[a][b] * p[b]).sum::<f64>() + cam.translation[a]).collect();
        if t[2] <= cam.near {
            continue;
        }
        let u = cam.fx * t[0] / t[2] + cam.cx;
        let v = cam.fy * t[1] / t[2] + cam.cy;
        let (w, h) = (cam.width as f64, cam.height as f64);
        if u < -0.15 * w || u > 1.15 * w || v < -0.15 * h || v > 1.15 * h {
            continue;
        }
        // J W Sigma W^T J^T
        let j = [
            [cam.fx / t[2], 0.0, -cam.fx * t[0] / (t[2] * t[2])],
            [0.0, cam.fy / t[2], -cam.fy * t[1] / (t[2] * t[2])],
        ];
        let sigma = build_covariance(scene.log_scales[i], scene.rotations[i]);
        let mut wsw = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        wsw[a][b] += r[a][c] * sigma[c][d] * r[b][d];
                    }
                }
            }
        }
        let mut cov = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..3 {
                    for d in 0..3 {
                        cov[a][b] += j[a][c] * wsw[c][d] * j[b][d];
                    }
                }
            }
        }
        let raw_det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        cov[0][0] += 0.3;
        cov[1][1] += 0.3;
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
        let mut alpha = sigmoid(scene.opacity_logits[i]);
        if opts.aa_opacity {
            alpha *= (raw_det.max(0.0) / det).sqrt();
        }
        let dv = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
        let n = (dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2]).sqrt();
        let dir = [dv[0] / n, dv[1] / n, dv[2] / n];
        let color = eval_color(scene.sh_of(i), scene.sh_degree, dir, scene.levels[i] as u32, opts.color_mode);
        splats.push(S {
            depth: t[2],
            idx: i,
            mean: [u, v],
            inv,
            alpha,
            color,
        });
    }
    splats.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.idx.cmp(&b.idx)));
    ImageBuffer::from_fn(cam.width, cam.height, |px, py, c| {
        let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
        let mut t = 1.0;
        let mut acc = 0.0;
        for s in &splats {
            let d = [x - s.mean[0], y - s.mean[1]];
            let q = d[0] * (s.inv[0][0] * d[0] + s.inv[0][1] * d[1]) + d[1] * (s.inv[1][0] * d[0] + s.inv[1][1] * d[1]);
            if q > 18.0 {
                continue;
            }
            let a = (s.alpha * (-0.5 * q).exp()).min(0.999);
            if t * (1.0 - a) < 1e-4 {
                break;
            }
            acc += s.color[c] * a * t;
            t *= 1.0 - a;
        }
        (acc + t * scene.background[c]).clamp(0.0, 1.0)
    })
}

pub fn camera(w: usize, h: usize) -> Camera {
    Camera::look_at([0.0, 0.0, -4.0], [0.0, 0.0, 0.0], [0.0, -1.0, 0.0], w, h, w as f64 * 1.2)
}

/// SH DC coefficient giving raw color `c`.
pub fn dc_for(c: f64) -> f64 {
    (c - 0.5) / SH_C0
}

/// Random scene near the origin; levels cycle through `1..=levels`.
pub fn random_scene(seed: u64, n: usize, levels: u32, sh_degree: u32, spread: f64, scale: (f64, f64)) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = GaussianScene::empty(levels, sh_degree, [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)]);
    for i in 0..n {
        let level = (i as u32 % levels) + 1;
        let nb = s.coeffs_per_gaussian() / 3;
        let mut sh = vec![0.0; s.coeffs_per_gaussian()];
        for c in 0..3 {
            let target = if level == 1 { rng.gen_range(0.1..0.9) } else { rng.gen_range(0.3..0.7) };
            sh[c * nb] = dc_for(target);
            for b in 1..nb {
                sh[c * nb + b] = rng.gen_range(-0.2..0.2);
            }
        }
        s.push(
            [rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-spread..spread)],
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            [
                rng.gen_range(scale.0..scale.1).ln(),
                rng.gen_range(scale.0..scale.1).ln(),
                rng.gen_range(scale.0..scale.1).ln(),
            ],
            rng.gen_range(-1.5..1.0),
            &sh,
            level as u8,
        );
    }
    s
}

/// Which scalar of the scene a finite-difference probe perturbs.
#[derive(Clone, Copy, Debug)]
pub enum Param {
    Position(usize, usize),
    Rotation(usize, usize),
    LogScale(usize, usize),
    Opacity(usize),
    Sh(usize),
}

pub fn params_of(scene: &GaussianScene) -> Vec<Param> {
    let mut out = Vec::new();
    for i in 0..scene.len() {
        for c in 0..3 {
            out.push(Param::Position(i, c));
            out.push(Param::LogScale(i, c));
        }
        for c in 0..4 {
            out.push(Param::Rotation(i, c));
        }
        out.push(Param::Opacity(i));
    }
    for j in 0..scene.sh.len() {
        out.push(Param::Sh(j));
    }
    out
}

pub fn param_mut(scene: &mut GaussianScene, p: Param) -> &mut f64 {
    match p {
        Param::Position(i, c) => &mut scene.positions[i][c],
        Param::Rotation(i, c) => &mut scene.rotations[i][c],
        Param::LogScale(i, c) => &mut scene.log_scales[i][c],
        Param::Opacity(i) => &mut scene.opacity_logits[i],
        Param::Sh(j) => &mut scene.sh[j],
    }
}

pub fn grad_of(g: &freqsplat::render::RenderGrads, p: Param) -> f64 {
    match p {
        Param::Position(i, c) => g.positions[i][c],
        Param::Rotation(i, c) => g.rotations[i][c],
        Param::LogScale(i, c) => g.log_scales[i][c],
        Param::Opacity(i) => g.opacity_logits[i],
        Param::Sh(j) => g.sh[j],
    }
}

/// Central difference of `f` at `p` with step `h`.
pub fn central_difference(scene: &GaussianScene, p: Param, h: f64, f: &dyn Fn(&GaussianScene) -> f64) -> f64 {
    let mut plus = scene.clone();
    *param_mut(&mut plus, p) += h;
    let mut minus = scene.clone();
    *param_mut(&mut minus, p) -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Worst relative error over all parameters, with gradients smaller than
/// `floor` compared on an absolute scale of `floor`.
pub struct GradReport {
    pub worst_rel: f64,
    pub worst_param: Option<Param>,
    pub checked: usize,
}

pub fn check_gradients(
    scene: &GaussianScene,
    grads: &freqsplat::render::RenderGrads,
    h: f64,
    floor: f64,
    f: &dyn Fn(&GaussianScene) -> f64,
) -> GradReport {
    let mut report = GradReport {
        worst_rel: 0.0,
        worst_param: None,
        checked: 0,
    };
    for p in params_of(scene) {
        let fd = central_difference(scene, p, h, f);
        let an = grad_of(grads, p);
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(floor);
        report.checked += 1;
        if rel > report.worst_rel {
            report.worst_rel = rel;
            report.worst_param = Some(p);
        }
    }
    report
}

pub fn dot(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn random_image(seed: u64, w: usize, h: usize, lo: f64, hi: f64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(w, h, |_, _, _| rng.gen_range(lo..hi))
}

/// Five broad Gaussians over two levels; smooth enough for finite differences.
pub fn smooth_scene(degree: u32) -> GaussianScene {
    let mut s = GaussianScene::empty(2, degree, [0.3, 0.5, 0.4]);
    let nb = s.coeffs_per_gaussian() / 3;
    let mut push = |pos: [f64; 3], rot: [f64; 4], ls: [f64; 3], a: f64, rgb: [f64; 3], lvl: u8| {
        let mut sh = vec![0.0; 3 * nb];
        for c in 0..3 {
            sh[c * nb] = dc_for(rgb[c]);
            for b in 1..nb {
                sh[c * nb + b] = 0.05 * (b as f64) * if c == 1 { -1.0 } else { 1.0 };
            }
        }
        s.push(pos, rot, ls, logit(a), &sh, lvl);
    };
    push([0.1, -0.05, 0.2], [0.9, 0.2, -0.1, 0.3], [0.9f64.ln(), 0.7f64.ln(), 1.1f64.ln()], 0.55, [0.6, 0.4, 0.5], 1);
    push([-0.2, 0.15, -0.3], [0.7, -0.3, 0.4, 0.1], [0.8f64.ln(), 1.0f64.ln(), 0.6f64.ln()], 0.4, [0.3, 0.7, 0.45], 1);
    push([0.25, 0.2, 0.0], [0.5, 0.5, 0.1, -0.6], [0.7f64.ln(), 0.9f64.ln(), 0.8f64.ln()], 0.35, [0.5, 0.55, 0.6], 1);
    push([0.0, -0.25, -0.5], [0.8, 0.1, 0.3, 0.2], [1.0f64.ln(), 0.6f64.ln(), 0.9f64.ln()], 0.5, [0.35, 0.45, 0.4], 2);
    push([-0.1, 0.0, -0.8], [0.6, -0.2, -0.5, 0.3], [0.9f64.ln(), 0.8f64.ln(), 0.7f64.ln()], 0.3, [0.62, 0.5, 0.55], 2);
    s
}

/// True when `sub` is `full` with some Gaussians removed and the rest unchanged, in order.
pub fn is_ordered_subset(sub: &GaussianScene, full: &GaussianScene) -> bool {
    let mut j = 0;
    for i in 0..sub.len() {
        while j < full.len() && full.select(&[j]) != sub.select(&[i]) {
            j += 1;
        }
        if j == full.len() {
            return false;
        }
        j += 1;
    }
    true
}
