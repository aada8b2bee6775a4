use crate::model::{build_covariance, eval_raw, quat_to_rotation, sh_basis, sigmoid, Camera, ColorMode, GaussianScene, Mat3, SH_C1};

use super::RenderOptions;

/// Screen-space dilation added to every projected covariance, in pixels^2.
pub const COV_BLUR: f64 = 0.3;
/// Mahalanobis distance^2 beyond which a splat contributes nothing.
pub const MAX_MAHALANOBIS_SQ: f64 = 18.0;
/// Upper bound on per-splat blending weight.
pub const MAX_ALPHA: f64 = 0.999;
/// Projected centres outside this multiple of the image extent are culled.
pub const FRUSTUM_MARGIN: f64 = 1.3;

pub(crate) type Mat23 = [[f64; 3]; 2];

/// A Gaussian projected to the image plane, plus the intermediates the
/// backward pass needs.
#[derive(Clone, Debug)]
pub struct Splat2D {
    /// Index into the source scene.
    pub index: usize,
    pub level: u32,
    /// Camera-space z.
    pub depth: f64,
    /// Pixel coordinates of the projected centre.
    pub mean: [f64; 2],
    /// Screen covariance `(xx, xy, yy)` including the dilation.
    pub cov: [f64; 3],
    /// Inverse of `cov`, `(xx, xy, yy)`.
    pub conic: [f64; 3],
    /// Opacity used for blending (anti-aliasing factor applied).
    pub opacity: f64,
    /// Signed color used for blending.
    pub color: [f64; 3],
    /// Inclusive pixel bounding box `(x0, y0, x1, y1)` of the cutoff ellipse.
    pub(crate) bbox: [i64; 4],
    pub(crate) base_opacity: f64,
    pub(crate) aa_factor: f64,
    pub(crate) color_scale: f64,
    pub(crate) dir: [f64; 3],
    pub(crate) dir_len: f64,
    pub(crate) cam_point: [f64; 3],
    pub(crate) jw: Mat23,
    pub(crate) cov_raw: [f64; 3],
    pub(crate) cov3: Mat3,
    pub(crate) rot: Mat3,
    pub(crate) scales: [f64; 3],
}

/// Per-splat gradients of the loss with respect to the screen-space quantities.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct SplatGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl SplatGrad {
    pub fn add(&mut self, o: &SplatGrad) {
        for i in 0..2 {
            self.mean[i] += o.mean[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.opacity += o.opacity;
    }
}

fn inv2(c: [f64; 3]) -> Option<[f64; 3]> {
    let det = c[0] * c[2] - c[1] * c[1];
    if det <= 0.0 || !det.is_finite() {
        return None;
    }
    Some([c[2] / det, -c[1] / det, c[0] / det])
}

/// Projects every Gaussian with level `<= max_level`; culled Gaussians are
/// omitted. The output is in scene order.
pub fn project(scene: &GaussianScene, camera: &Camera, max_level: u32, opts: &RenderOptions) -> Vec<Splat2D> {
    let center = camera.center();
    (0..scene.len())
        .filter(|&i| scene.levels[i] as u32 <= max_level)
        .filter_map(|i| project_one(scene, i, camera, center, opts))
        .collect()
}

pub(crate) fn project_one(
    scene: &GaussianScene,
    i: usize,
    cam: &Camera,
    center: [f64; 3],
    opts: &RenderOptions,
) -> Option<Splat2D> {
    let mu = scene.positions[i];
    let t = cam.world_to_camera(mu);
    if t[2] <= cam.near {
        return None;
    }
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mean = [cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy];
    let (mx, my) = (0.5 * (FRUSTUM_MARGIN - 1.0) * w, 0.5 * (FRUSTUM_MARGIN - 1.0) * h);
    if mean[0] < -mx || mean[0] > w + mx || mean[1] < -my || mean[1] > h + my {
        return None;
    }

    let rot = quat_to_rotation(scene.rotations[i]);
    let ls = scene.log_scales[i];
    let scales = ls.map(f64::exp);
    let cov3 = build_covariance(ls, scene.rotations[i]);

    let tz2 = t[2] * t[2];
    let j: Mat23 = [
        [cam.fx / t[2], 0.0, -cam.fx * t[0] / tz2],
        [0.0, cam.fy / t[2], -cam.fy * t[1] / tz2],
    ];
    let wr = &cam.rotation;
    let mut jw = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jw[r][c] = (0..3).map(|k| j[r][k] * wr[k][c]).sum();
        }
    }
    // cov_raw = JW Sigma (JW)^T
    let mut tmp = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            tmp[r][c] = (0..3).map(|k| jw[r][k] * cov3[k][c]).sum();
        }
    }
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cov_raw = [dot(&tmp[0], &jw[0]), dot(&tmp[0], &jw[1]), dot(&tmp[1], &jw[1])];
    let cov = [cov_raw[0] + COV_BLUR, cov_raw[1], cov_raw[2] + COV_BLUR];
    let conic = inv2(cov)?;

    let base_opacity = sigmoid(scene.opacity_logits[i]);
    let aa_factor = if opts.aa_opacity {
        let det_raw = (cov_raw[0] * cov_raw[2] - cov_raw[1] * cov_raw[1]).max(0.0);
        let det = cov[0] * cov[2] - cov[1] * cov[1];
        (det_raw / det).sqrt()
    } else {
        1.0
    };

    // bounding box of the cutoff ellipse along the largest eigen-axis
    let mid = 0.5 * (cov[0] + cov[2]);
    let disc = (mid * mid - (cov[0] * cov[2] - cov[1] * cov[1])).max(0.0).sqrt();
    let lambda_max = mid + disc;
    let radius = (MAX_MAHALANOBIS_SQ * lambda_max).sqrt();
    let bbox = [
        (mean[0] - radius - 0.5).floor() as i64,
        (mean[1] - radius - 0.5).floor() as i64,
        (mean[0] + radius - 0.5).ceil() as i64,
        (mean[1] + radius - 0.5).ceil() as i64,
    ];
    if bbox[2] < 0 || bbox[3] < 0 || bbox[0] >= cam.width as i64 || bbox[1] >= cam.height as i64 {
        return None;
    }

    let v = [mu[0] - center[0], mu[1] - center[1], mu[2] - center[2]];
    let dir_len = dot(&v, &v).sqrt();
    let dir = if dir_len > 0.0 {
        v.map(|x| x / dir_len)
    } else {
        [0.0, 0.0, 1.0]
    };
    let level = scene.levels[i] as u32;
    let raw = eval_raw(scene.sh_of(i), scene.sh_degree, dir);
    let residual = level >= 2 && opts.color_mode == ColorMode::Residual;
    let (color, color_scale) = if residual {
        (raw.map(|c| 2.0 * c - 1.0), 2.0)
    } else {
        (raw, 1.0)
    };

    Some(Splat2D {
        index: i,
        level,
        depth: t[2],
        mean,
        cov,
        conic,
        opacity: base_opacity * aa_factor,
        color,
        bbox,
        base_opacity,
        aa_factor,
        color_scale,
        dir,
        dir_len,
        cam_point: t,
        jw,
        cov_raw,
        cov3,
        rot,
        scales,
    })
}

/// Gradients for one Gaussian's learnable parameters.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ParamGrad {
    pub position: [f64; 3],
    pub rotation: [f64; 4],
    pub log_scale: [f64; 3],
    pub opacity_logit: f64,
}

/// Chains screen-space gradients back to the Gaussian parameters. SH
/// gradients are written into `sh_grad`.
pub(crate) fn backward_one(
    s: &Splat2D,
    g: &SplatGrad,
    scene: &GaussianScene,
    cam: &Camera,
    opts: &RenderOptions,
    sh_grad: &mut [f64],
) -> ParamGrad {
    let mut out = ParamGrad::default();
    let t = s.cam_point;
    let (fx, fy) = (cam.fx, cam.fy);

    // opacity: alpha_eff = sigmoid(logit) * aa
    let g_base = g.opacity * s.aa_factor;
    out.opacity_logit = g_base * s.base_opacity * (1.0 - s.base_opacity);

    // conic -> covariance: dSigma = -A dA A with the symmetric gradient split
    let a = [[s.conic[0], s.conic[1]], [s.conic[1], s.conic[2]]];
    let ga = [[g.conic[0], 0.5 * g.conic[1]], [0.5 * g.conic[1], g.conic[2]]];
    let mut gcov = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    acc += a[r][k] * ga[k][l] * a[l][c];
                }
            }
            gcov[r][c] = -acc;
        }
    }
    if opts.aa_opacity {
        let g_f = g.opacity * s.base_opacity;
        let raw = s.cov_raw;
        let det_raw = raw[0] * raw[2] - raw[1] * raw[1];
        if det_raw > 0.0 && s.aa_factor > 0.0 {
            let inv_raw = [raw[2] / det_raw, -raw[1] / det_raw, raw[0] / det_raw];
            let k = 0.5 * s.aa_factor * g_f;
            let (ir, ic) = (inv_raw, s.conic);
            gcov[0][0] += k * (ir[0] - ic[0]);
            gcov[0][1] += k * (ir[1] - ic[1]);
            gcov[1][0] += k * (ir[1] - ic[1]);
            gcov[1][1] += k * (ir[2] - ic[2]);
        }
    }

    // cov_raw = T Sigma T^T with T = JW
    let jw = &s.jw;
    let sig = &s.cov3;
    let mut gsig = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    acc += jw[r][i] * gcov[r][c] * jw[c][j];
                }
            }
            gsig[i][j] = acc;
        }
    }
    // dT = 2 gcov T Sigma
    let mut tsig = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            tsig[r][c] = (0..3).map(|k| jw[r][k] * sig[k][c]).sum();
        }
    }
    let mut gt = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            gt[r][c] = 2.0 * (0..2).map(|k| gcov[r][k] * tsig[k][c]).sum::<f64>();
        }
    }
    // T = J W  =>  dJ = dT W^T
    let w = &cam.rotation;
    let mut gj = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            gj[r][c] = (0..3).map(|k| gt[r][k] * w[c][k]).sum();
        }
    }
    let (tz, tz2, tz3) = (t[2], t[2] * t[2], t[2] * t[2] * t[2]);
    let mut gtc = [0.0; 3];
    gtc[0] += gj[0][2] * (-fx / tz2);
    gtc[1] += gj[1][2] * (-fy / tz2);
    gtc[2] += gj[0][0] * (-fx / tz2) + gj[0][2] * (2.0 * fx * t[0] / tz3) + gj[1][1] * (-fy / tz2)
        + gj[1][2] * (2.0 * fy * t[1] / tz3);
    // projected mean
    gtc[0] += g.mean[0] * fx / tz;
    gtc[1] += g.mean[1] * fy / tz;
    gtc[2] += -g.mean[0] * fx * t[0] / tz2 - g.mean[1] * fy * t[1] / tz2;
    for c in 0..3 {
        out.position[c] = (0..3).map(|k| w[k][c] * gtc[k]).sum();
    }

    // color -> SH, and view direction -> position
    let nb = sh_grad.len() / 3;
    let basis = sh_basis(scene.sh_degree, s.dir);
    let sh = scene.sh_of(s.index);
    let mut gdir = [0.0; 3];
    for ch in 0..3 {
        let graw = g.color[ch] * s.color_scale;
        for k in 0..nb {
            sh_grad[ch * nb + k] += graw * basis[k];
        }
        if nb > 1 {
            gdir[0] += graw * (-SH_C1 * sh[ch * nb + 3]);
            gdir[1] += graw * (-SH_C1 * sh[ch * nb + 1]);
            gdir[2] += graw * (SH_C1 * sh[ch * nb + 2]);
        }
    }
    if nb > 1 && s.dir_len > 0.0 {
        let d = s.dir;
        let proj = d[0] * gdir[0] + d[1] * gdir[1] + d[2] * gdir[2];
        for c in 0..3 {
            out.position[c] += (gdir[c] - d[c] * proj) / s.dir_len;
        }
    }

    // Sigma = M M^T, M = R S
    let r = &s.rot;
    let sc = s.scales;
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * sc[j];
        }
    }
    let mut gm = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            gm[i][j] = 2.0 * (0..3).map(|k| gsig[i][k] * m[k][j]).sum::<f64>();
        }
    }
    for j in 0..3 {
        let gs: f64 = (0..3).map(|i| r[i][j] * gm[i][j]).sum();
        out.log_scale[j] = gs * sc[j];
    }
    let mut gr = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            gr[i][j] = gm[i][j] * sc[j];
        }
    }
    out.rotation = quat_backward(scene.rotations[s.index], &gr);
    out
}

/// Gradient of the (normalizing) quaternion-to-matrix map.
fn quat_backward(q_raw: [f64; 4], gr: &Mat3) -> [f64; 4] {
    let n = (q_raw.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if n == 0.0 {
        return [0.0; 4];
    }
    let [w, x, y, z] = q_raw.map(|v| v / n);
    let gw = 2.0 * (-z * gr[0][1] + y * gr[0][2] + z * gr[1][0] - x * gr[1][2] - y * gr[2][0] + x * gr[2][1]);
    let gx = 2.0
        * (y * gr[0][1] + z * gr[0][2] + y * gr[1][0] - 2.0 * x * gr[1][1] - w * gr[1][2] + z * gr[2][0]
            + w * gr[2][1]
            - 2.0 * x * gr[2][2]);
    let gy = 2.0
        * (-2.0 * y * gr[0][0] + x * gr[0][1] + w * gr[0][2] + x * gr[1][0] + z * gr[1][2] - w * gr[2][0]
            + z * gr[2][1]
            - 2.0 * y * gr[2][2]);
    let gz = 2.0
        * (-2.0 * z * gr[0][0] - w * gr[0][1] + x * gr[0][2] + w * gr[1][0] - 2.0 * z * gr[1][1] + y * gr[1][2]
            + x * gr[2][0]
            + y * gr[2][1]);
    let gq = [gw, gx, gy, gz];
    let qn = [w, x, y, z];
    let d: f64 = (0..4).map(|k| qn[k] * gq[k]).sum();
    [0, 1, 2, 3].map(|k| (gq[k] - qn[k] * d) / n)
}
