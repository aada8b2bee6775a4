use super::{ImageBuffer, CHANNELS};
use crate::error::Result;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "same" convolution with zero padding. The window is symmetric,
/// so this operator is its own adjoint.
fn blur(plane: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &wt) in win.iter().enumerate() {
                let sx = x as isize + t as isize - r;
                if sx >= 0 && (sx as usize) < w {
                    acc += wt * row[sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (t, &wt) in win.iter().enumerate() {
            let sy = y as isize + t as isize - r;
            if sy >= 0 && (sy as usize) < h {
                let src = &tmp[sy as usize * w..(sy as usize + 1) * w];
                for (o, s) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                    *o += wt * s;
                }
            }
        }
    }
    out
}

struct Stats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    s_xx: Vec<f64>,
    s_yy: Vec<f64>,
    s_xy: Vec<f64>,
}

fn stats(x: &[f64], y: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Stats {
    let mu_x = blur(x, w, h, win);
    let mu_y = blur(y, w, h, win);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mut s_xx = blur(&xx, w, h, win);
    let mut s_yy = blur(&yy, w, h, win);
    let mut s_xy = blur(&xy, w, h, win);
    for i in 0..w * h {
        s_xx[i] -= mu_x[i] * mu_x[i];
        s_yy[i] -= mu_y[i] * mu_y[i];
        s_xy[i] -= mu_x[i] * mu_y[i];
    }
    Stats {
        mu_x,
        mu_y,
        s_xx,
        s_yy,
        s_xy,
    }
}

/// Mean SSIM over pixels and channels with an 11x11 Gaussian window
/// (sigma 1.5) and zero-padded borders.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    let win = gaussian_window();
    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let s = stats(&a.channel(c), &b.channel(c), w, h, &win);
        for i in 0..w * h {
            let num = (2.0 * s.mu_x[i] * s.mu_y[i] + SSIM_C1) * (2.0 * s.s_xy[i] + SSIM_C2);
            let den = (s.mu_x[i].powi(2) + s.mu_y[i].powi(2) + SSIM_C1) * (s.s_xx[i] + s.s_yy[i] + SSIM_C2);
            total += num / den;
        }
    }
    Ok(total / (w * h * CHANNELS) as f64)
}

/// [`ssim`] together with its gradient with respect to `b`.
pub fn ssim_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    a.same_dims(b)?;
    let win = gaussian_window();
    let (w, h) = (a.width(), a.height());
    let n = w * h;
    let norm = 1.0 / (n * CHANNELS) as f64;
    let mut total = 0.0;
    let mut planes = Vec::with_capacity(CHANNELS);
    for c in 0..CHANNELS {
        let x = a.channel(c);
        let y = b.channel(c);
        let s = stats(&x, &y, w, h, &win);
        let mut g_mu = vec![0.0; n];
        let mut g_yy = vec![0.0; n];
        let mut g_xy = vec![0.0; n];
        for i in 0..n {
            let a1 = 2.0 * s.mu_x[i] * s.mu_y[i] + SSIM_C1;
            let a2 = 2.0 * s.s_xy[i] + SSIM_C2;
            let b1 = s.mu_x[i].powi(2) + s.mu_y[i].powi(2) + SSIM_C1;
            let b2 = s.s_xx[i] + s.s_yy[i] + SSIM_C2;
            let val = a1 * a2 / (b1 * b2);
            total += val;
            let d_mu = 2.0 * s.mu_x[i] * a2 / (b1 * b2) - val * 2.0 * s.mu_y[i] / b1;
            let d_yy = -val / b2;
            let d_xy = 2.0 * a1 / (b1 * b2);
            // chain through s_yy = E[y^2] - mu_y^2 and s_xy = E[xy] - mu_x mu_y
            g_mu[i] = norm * (d_mu - 2.0 * s.mu_y[i] * d_yy - s.mu_x[i] * d_xy);
            g_yy[i] = norm * d_yy;
            g_xy[i] = norm * d_xy;
        }
        let t_mu = blur(&g_mu, w, h, &win);
        let t_yy = blur(&g_yy, w, h, &win);
        let t_xy = blur(&g_xy, w, h, &win);
        let grad: Vec<f64> = (0..n).map(|j| t_mu[j] + 2.0 * y[j] * t_yy[j] + x[j] * t_xy[j]).collect();
        planes.push(grad);
    }
    let grad = ImageBuffer::from_channels(w, h, [&planes[0], &planes[1], &planes[2]]);
    Ok((total * norm, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u64, amp: f64, base: f64) -> ImageBuffer {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ImageBuffer::from_fn(w, h, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            base + amp * (((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5)
        })
    }

    /// Direct per-pixel SSIM: explicit 2-D window sums over the zero-padded
    /// neighbourhood.
    fn oracle_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
        let g = gaussian_window();
        let (w, h) = (a.width() as isize, a.height() as isize);
        let mut total = 0.0;
        for c in 0..3 {
            for py in 0..h {
                for px in 0..w {
                    let (mut mx, mut my, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for dy in -5..=5isize {
                        for dx in -5..=5isize {
                            let (x, y) = (px + dx, py + dy);
                            if x < 0 || y < 0 || x >= w || y >= h {
                                continue;
                            }
                            let wt = g[(dx + 5) as usize] * g[(dy + 5) as usize];
                            let va = a.get(x as usize, y as usize, c);
                            let vb = b.get(x as usize, y as usize, c);
                            mx += wt * va;
                            my += wt * vb;
                            exx += wt * va * va;
                            eyy += wt * vb * vb;
                            exy += wt * va * vb;
                        }
                    }
                    let (sxx, syy, sxy) = (exx - mx * mx, eyy - my * my, exy - mx * my);
                    total += ((2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2));
                }
            }
        }
        total / (w * h * 3) as f64
    }

    #[test]
    fn identical_is_one() {
        let a = noise(16, 12, 1, 1.0, 0.5);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vs_one_is_near_zero() {
        let a = ImageBuffer::filled(16, 16, [0.0; 3]);
        let b = ImageBuffer::filled(16, 16, [1.0; 3]);
        let s = ssim(&a, &b).unwrap();
        assert!((s - oracle_ssim(&a, &b)).abs() < 1e-12);
        assert!(s.abs() < 1e-3, "{s}");
    }

    #[test]
    fn tiny_noise_is_near_one() {
        let a = noise(16, 16, 2, 1.0, 0.5);
        let mut b = a.clone();
        let n = noise(16, 16, 3, 2e-6, 0.0);
        b.add_assign(&n);
        assert!(ssim(&a, &b).unwrap() >= 0.9999);
    }

    #[test]
    fn matches_oracle_and_is_symmetric() {
        let a = noise(13, 11, 4, 1.0, 0.5);
        let b = noise(13, 11, 5, 1.0, 0.5);
        let s = ssim(&a, &b).unwrap();
        assert!((s - oracle_ssim(&a, &b)).abs() < 1e-12);
        assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-14);
        assert!(s.abs() <= 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = noise(12, 12, 6, 0.8, 0.5);
        let b = noise(12, 12, 7, 0.8, 0.5);
        let (v, grad) = ssim_grad(&a, &b).unwrap();
        assert!((v - ssim(&a, &b).unwrap()).abs() < 1e-14);
        let h = 1e-5;
        for i in (0..b.data().len()).step_by(7) {
            let mut bp = b.clone();
            bp.data_mut()[i] += h;
            let mut bm = b.clone();
            bm.data_mut()[i] -= h;
            let fd = (ssim(&a, &bp).unwrap() - ssim(&a, &bm).unwrap()) / (2.0 * h);
            let an = grad.data()[i];
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1e-3), "i={i}: fd {fd} analytic {an}");
        }
    }
}
