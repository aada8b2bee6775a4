use rayon::prelude::*;

use super::project::{backward_one, project_one, SplatGrad, Splat2D, MAX_ALPHA, MAX_MAHALANOBIS_SQ};
use super::{RenderGrads, RenderOptions};
use crate::error::{Error, Result};
use crate::imgproc::ImageBuffer;
use crate::model::{Camera, GaussianScene};

pub const TILE: usize = 16;
/// Blending stops once transmittance would fall below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Most accumulated levels one forward pass can hold.
pub const MAX_PASSES: usize = 32;

struct TileGrid {
    tiles_x: usize,
    tiles_y: usize,
}

impl TileGrid {
    fn new(w: usize, h: usize) -> Self {
        Self {
            tiles_x: w.div_ceil(TILE),
            tiles_y: h.div_ceil(TILE),
        }
    }

    fn count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    fn pixels(&self, tile: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let (x0, y0) = (tx * TILE, ty * TILE);
        let (x1, y1) = ((x0 + TILE).min(w), (y0 + TILE).min(h));
        (y0..y1).flat_map(move |y| (x0..x1).map(move |x| (x, y)))
    }
}

/// Forward result for one accumulated level.
struct LevelPass {
    level: u32,
    /// Per pixel, number of tile-list entries walked before stopping.
    last: Vec<u32>,
    /// Per pixel, transmittance after the last blended splat.
    final_t: Vec<f64>,
    pre_clamp: ImageBuffer,
    image: ImageBuffer,
}

/// Projected splats and per-level blending state of one forward pass,
/// retained for [`ForwardState::backward`].
///
/// All requested levels are blended together: each splat is evaluated once
/// per pixel and its weight fed to every level it belongs to.
pub struct ForwardState {
    camera: Camera,
    opts: RenderOptions,
    background: [f64; 3],
    splats: Vec<Splat2D>,
    /// Per tile, indices into `splats` in blending order.
    tiles: Vec<Vec<u32>>,
    /// Per tile entry, bit `p` set when the splat belongs to pass `p`.
    masks: Vec<Vec<u32>>,
    passes: Vec<LevelPass>,
}

impl ForwardState {
    /// Projects the scene once and rasterizes each requested accumulated level.
    pub fn new(scene: &GaussianScene, camera: &Camera, levels: &[u32], opts: &RenderOptions) -> Result<Self> {
        let max_allowed = scene.num_levels.max(scene.max_level()).max(1);
        for &k in levels {
            if k < 1 || k > max_allowed {
                return Err(Error::LevelOutOfRange { level: k, max: max_allowed });
            }
        }
        if levels.len() > MAX_PASSES {
            return Err(Error::Invalid(format!("at most {MAX_PASSES} levels per pass, got {}", levels.len())));
        }
        let top = levels.iter().copied().max().unwrap_or(1);
        let center = camera.center();
        let mut splats: Vec<Splat2D> = (0..scene.len())
            .filter(|&i| scene.levels[i] as u32 <= top)
            .filter_map(|i| project_one(scene, i, camera, center, opts))
            .collect();
        splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

        let grid = TileGrid::new(camera.width, camera.height);
        let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); grid.count()];
        for (si, s) in splats.iter().enumerate() {
            let tx0 = (s.bbox[0].max(0) as usize) / TILE;
            let ty0 = (s.bbox[1].max(0) as usize) / TILE;
            let tx1 = (s.bbox[2].min(camera.width as i64 - 1) as usize) / TILE;
            let ty1 = (s.bbox[3].min(camera.height as i64 - 1) as usize) / TILE;
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    tiles[ty * grid.tiles_x + tx].push(si as u32);
                }
            }
        }
        let level_mask = |l: u32| -> u32 {
            levels
                .iter()
                .enumerate()
                .filter(|&(_, &k)| l <= k)
                .fold(0, |m, (p, _)| m | (1 << p))
        };
        let masks: Vec<Vec<u32>> = tiles
            .iter()
            .map(|t| t.iter().map(|&si| level_mask(splats[si as usize].level)).collect())
            .collect();

        let mut state = ForwardState {
            camera: camera.clone(),
            opts: *opts,
            background: scene.background,
            splats,
            tiles,
            masks,
            passes: Vec::new(),
        };
        state.passes = state.rasterize(levels, &grid);
        Ok(state)
    }

    pub fn image(&self, k: u32) -> Option<&ImageBuffer> {
        self.passes.iter().find(|p| p.level == k).map(|p| &p.image)
    }

    /// Unclamped image for level `k`.
    pub fn pre_clamp(&self, k: u32) -> Option<&ImageBuffer> {
        self.passes.iter().find(|p| p.level == k).map(|p| &p.pre_clamp)
    }

    pub fn levels(&self) -> Vec<u32> {
        self.passes.iter().map(|p| p.level).collect()
    }

    pub fn splats(&self) -> &[Splat2D] {
        &self.splats
    }

    pub fn into_images(self) -> Vec<ImageBuffer> {
        self.passes.into_iter().map(|p| p.image).collect()
    }

    fn rasterize(&self, levels: &[u32], grid: &TileGrid) -> Vec<LevelPass> {
        let (w, h) = (self.camera.width, self.camera.height);
        let np = levels.len();
        let results: Vec<TileOut> = self.map_tiles(grid, |tile| {
            forward_tile(&self.splats, &self.tiles[tile], &self.masks[tile], grid.pixels(tile, w, h), np, self.background)
        });
        let mut passes: Vec<LevelPass> = levels
            .iter()
            .map(|&level| LevelPass {
                level,
                last: vec![0; w * h],
                final_t: vec![0.0; w * h],
                pre_clamp: ImageBuffer::new(w, h),
                image: ImageBuffer::new(w, h),
            })
            .collect();
        for (tile, out) in results.into_iter().enumerate() {
            for (k, (px, py)) in grid.pixels(tile, w, h).enumerate() {
                let p = py * w + px;
                for (pi, pass) in passes.iter_mut().enumerate() {
                    let o = k * np + pi;
                    pass.last[p] = out.last[o];
                    pass.final_t[p] = out.final_t[o];
                    for c in 0..3 {
                        pass.pre_clamp.set(px, py, c, out.color[o][c]);
                    }
                }
            }
        }
        for pass in &mut passes {
            pass.image = pass.pre_clamp.clamp01();
        }
        passes
    }

    fn map_tiles<T: Send>(&self, grid: &TileGrid, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        if self.opts.deterministic {
            (0..grid.count()).map(f).collect()
        } else {
            (0..grid.count()).into_par_iter().map(f).collect()
        }
    }

    /// Gradients of `sum_k <upstream_k, image_k>` with respect to the scene.
    /// `upstream` pairs a rendered level with the loss gradient on its
    /// clamped image; gradients vanish where the pre-clamp value left [0,1].
    pub fn backward(&self, scene: &GaussianScene, upstream: &[(u32, &ImageBuffer)]) -> Result<RenderGrads> {
        let grid = TileGrid::new(self.camera.width, self.camera.height);
        let (w, h) = (self.camera.width, self.camera.height);
        let mut per_pass: Vec<Option<&ImageBuffer>> = vec![None; self.passes.len()];
        for &(k, grad) in upstream {
            let pi = self
                .passes
                .iter()
                .position(|p| p.level == k)
                .ok_or_else(|| Error::Invalid(format!("missing forward state for level {k}")))?;
            if grad.width() != w || grad.height() != h {
                return Err(Error::DimensionMismatch {
                    left_w: w,
                    left_h: h,
                    right_w: grad.width(),
                    right_h: grad.height(),
                });
            }
            if per_pass[pi].is_some() {
                return Err(Error::Invalid(format!("level {k} given twice")));
            }
            per_pass[pi] = Some(grad);
        }
        let per_tile: Vec<Vec<SplatGrad>> = self.map_tiles(&grid, |tile| {
            let ctx = BackwardTile {
                splats: &self.splats,
                list: &self.tiles[tile],
                masks: &self.masks[tile],
                passes: &self.passes,
                upstream: &per_pass,
                width: w,
                bg: self.background,
            };
            ctx.run(grid.pixels(tile, w, h))
        });
        // merged in tile order so results do not depend on scheduling
        let mut acc = vec![SplatGrad::default(); self.splats.len()];
        for (tile, grads) in per_tile.into_iter().enumerate() {
            for (slot, g) in self.tiles[tile].iter().zip(grads) {
                acc[*slot as usize].add(&g);
            }
        }

        let mut out = RenderGrads::zeros(scene);
        let nc = scene.coeffs_per_gaussian();
        for (s, g) in self.splats.iter().zip(&acc) {
            let i = s.index;
            let p = backward_one(s, g, scene, &self.camera, &self.opts, &mut out.sh[i * nc..(i + 1) * nc]);
            out.positions[i] = p.position;
            out.rotations[i] = p.rotation;
            out.log_scales[i] = p.log_scale;
            out.opacity_logits[i] = p.opacity_logit;
            out.screen_grad_norm[i] = (g.mean[0] * g.mean[0] + g.mean[1] * g.mean[1]).sqrt();
            out.visible[i] = true;
        }
        Ok(out)
    }
}

/// Per pixel and pass, in pixel-major order.
struct TileOut {
    color: Vec<[f64; 3]>,
    last: Vec<u32>,
    final_t: Vec<f64>,
}

/// Gaussian value at a pixel centre with the offset from the mean.
#[inline]
fn splat_eval(s: &Splat2D, x: f64, y: f64) -> Option<(f64, f64, f64)> {
    let dx = x - s.mean[0];
    let dy = y - s.mean[1];
    let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
    if q > MAX_MAHALANOBIS_SQ {
        return None;
    }
    Some(((-0.5 * q).exp(), dx, dy))
}

#[inline]
fn bits(mut m: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let p = m.trailing_zeros() as usize;
        m &= m - 1;
        Some(p)
    })
}

fn forward_tile(
    splats: &[Splat2D],
    list: &[u32],
    masks: &[u32],
    pixels: impl Iterator<Item = (usize, usize)>,
    np: usize,
    bg: [f64; 3],
) -> TileOut {
    let mut out = TileOut {
        color: Vec::with_capacity(TILE * TILE * np),
        last: Vec::with_capacity(TILE * TILE * np),
        final_t: Vec::with_capacity(TILE * TILE * np),
    };
    let all: u32 = if np == 32 { u32::MAX } else { (1u32 << np) - 1 };
    for (px, py) in pixels {
        let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
        let mut t = [1.0f64; MAX_PASSES];
        let mut c = [[0.0f64; 3]; MAX_PASSES];
        let mut walked = [list.len() as u32; MAX_PASSES];
        let mut active = all;
        for (j, &si) in list.iter().enumerate() {
            let m = masks[j] & active;
            if m == 0 {
                continue;
            }
            let s = &splats[si as usize];
            let Some((g, _, _)) = splat_eval(s, x, y) else {
                continue;
            };
            let alpha = (s.opacity * g).min(MAX_ALPHA);
            for p in bits(m) {
                let next_t = t[p] * (1.0 - alpha);
                if next_t < MIN_TRANSMITTANCE {
                    walked[p] = j as u32;
                    active &= !(1 << p);
                    continue;
                }
                let wgt = alpha * t[p];
                for ch in 0..3 {
                    c[p][ch] += s.color[ch] * wgt;
                }
                t[p] = next_t;
            }
            if active == 0 {
                break;
            }
        }
        for p in 0..np {
            for ch in 0..3 {
                c[p][ch] += t[p] * bg[ch];
            }
            out.color.push(c[p]);
            out.last.push(walked[p]);
            out.final_t.push(t[p]);
        }
    }
    out
}

struct BackwardTile<'a> {
    splats: &'a [Splat2D],
    list: &'a [u32],
    masks: &'a [u32],
    passes: &'a [LevelPass],
    upstream: &'a [Option<&'a ImageBuffer>],
    width: usize,
    bg: [f64; 3],
}

impl BackwardTile<'_> {
    fn run(&self, pixels: impl Iterator<Item = (usize, usize)>) -> Vec<SplatGrad> {
        let mut grads = vec![SplatGrad::default(); self.list.len()];
        if self.list.is_empty() {
            return grads;
        }
        let bg = self.bg;
        for (px, py) in pixels {
            let p = py * self.width + px;
            let mut gpix = [[0.0f64; 3]; MAX_PASSES];
            let mut t = [0.0f64; MAX_PASSES];
            let mut behind = [[0.0f64; 3]; MAX_PASSES];
            let mut last = [0usize; MAX_PASSES];
            let mut act = 0u32;
            let mut start = 0usize;
            for (pi, pass) in self.passes.iter().enumerate() {
                let Some(up) = self.upstream[pi] else {
                    continue;
                };
                let mut g = up.pixel(px, py);
                for (ch, gv) in g.iter_mut().enumerate() {
                    let v = pass.pre_clamp.get(px, py, ch);
                    if !(0.0..=1.0).contains(&v) {
                        *gv = 0.0;
                    }
                }
                if g == [0.0; 3] {
                    continue;
                }
                gpix[pi] = g;
                t[pi] = pass.final_t[p];
                behind[pi] = [t[pi] * bg[0], t[pi] * bg[1], t[pi] * bg[2]];
                last[pi] = pass.last[p] as usize;
                start = start.max(last[pi]);
                act |= 1 << pi;
            }
            if act == 0 {
                continue;
            }
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            for j in (0..start).rev() {
                let mut m = self.masks[j] & act;
                for pi in bits(m) {
                    if j >= last[pi] {
                        m &= !(1 << pi);
                    }
                }
                if m == 0 {
                    continue;
                }
                let s = &self.splats[self.list[j] as usize];
                let Some((g, dx, dy)) = splat_eval(s, x, y) else {
                    continue;
                };
                let a = s.opacity * g;
                let clamped = a > MAX_ALPHA;
                let alpha = a.min(MAX_ALPHA);
                let gs = &mut grads[j];
                let mut d_alpha = 0.0;
                for pi in bits(m) {
                    t[pi] /= 1.0 - alpha;
                    let wgt = alpha * t[pi];
                    for ch in 0..3 {
                        gs.color[ch] += wgt * gpix[pi][ch];
                        d_alpha += gpix[pi][ch] * (s.color[ch] * t[pi] - behind[pi][ch] / (1.0 - alpha));
                        behind[pi][ch] += s.color[ch] * wgt;
                    }
                }
                if clamped {
                    continue;
                }
                gs.opacity += d_alpha * g;
                let d_g = d_alpha * s.opacity * g;
                // d(-q/2) w.r.t. mean = A d ; w.r.t. conic entries
                gs.mean[0] += d_g * (s.conic[0] * dx + s.conic[1] * dy);
                gs.mean[1] += d_g * (s.conic[1] * dx + s.conic[2] * dy);
                gs.conic[0] += -0.5 * d_g * dx * dx;
                gs.conic[1] += -d_g * dx * dy;
                gs.conic[2] += -0.5 * d_g * dy * dy;
            }
        }
        grads
    }
}
