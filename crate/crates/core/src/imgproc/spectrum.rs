use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{ImageBuffer, CHANNELS};
use crate::error::Result;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Per-channel magnitudes `|F(u,v)|` of the unnormalized 2-D DFT.
#[derive(Clone, Debug)]
pub struct MagnitudeSpectrum {
    pub width: usize,
    pub height: usize,
    /// `CHANNELS` planes of `height * width` magnitudes, row-major.
    pub mags: Vec<f64>,
}

impl MagnitudeSpectrum {
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.mags[c * n..(c + 1) * n]
    }
}

/// In-place 2-D FFT of a row-major `h x w` complex plane. `inverse` is
/// unnormalized, matching rustfft.
fn fft2(buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let (row, col) = if inverse {
            (p.plan_fft_inverse(w), p.plan_fft_inverse(h))
        } else {
            (p.plan_fft_forward(w), p.plan_fft_forward(h))
        };
        row.process(buf);
        let mut column = vec![Complex::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = buf[y * w + x];
            }
            col.process(&mut column);
            for y in 0..h {
                buf[y * w + x] = column[y];
            }
        }
    });
}

fn channel_spectrum(img: &ImageBuffer, c: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = img.channel(c).into_iter().map(|v| Complex::new(v, 0.0)).collect();
    fft2(&mut buf, img.width(), img.height(), false);
    buf
}

pub fn magnitude_spectrum(img: &ImageBuffer) -> MagnitudeSpectrum {
    let mut mags = Vec::with_capacity(img.pixels() * CHANNELS);
    for c in 0..CHANNELS {
        mags.extend(channel_spectrum(img, c).iter().map(|z| z.norm()));
    }
    MagnitudeSpectrum {
        width: img.width(),
        height: img.height(),
        mags,
    }
}

/// Mean absolute difference of DFT magnitudes, averaged over bins and channels.
pub fn dft_discrepancy(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    let ma = magnitude_spectrum(a);
    let mb = magnitude_spectrum(b);
    let n = ma.mags.len() as f64;
    Ok(ma.mags.iter().zip(&mb.mags).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// [`dft_discrepancy`] and its gradient with respect to `b`. The gradient with
/// respect to `a` is obtained by swapping the arguments. Bins where either
/// the difference or `|F_b|` is zero contribute a zero subgradient.
pub fn dft_discrepancy_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    a.same_dims(b)?;
    let (w, h) = (b.width(), b.height());
    let n = (w * h * CHANNELS) as f64;
    let mut value = 0.0;
    let mut planes: Vec<Vec<f64>> = Vec::with_capacity(CHANNELS);
    for c in 0..CHANNELS {
        let fa = channel_spectrum(a, c);
        let mut fb = channel_spectrum(b, c);
        for (za, zb) in fa.iter().zip(fb.iter_mut()) {
            let diff = za.norm() - zb.norm();
            value += diff.abs();
            let mag = zb.norm();
            // d|F_b|/dF_b = F_b / |F_b|, scaled by d|diff|/d|F_b| = -sign(diff)
            *zb = if mag > 0.0 && diff != 0.0 {
                *zb * (-diff.signum() / (mag * n))
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        // grad(x) = Re(sum_k Z_k e^{+i w x}) for real inputs
        fft2(&mut fb, w, h, true);
        planes.push(fb.iter().map(|z| z.re).collect());
    }
    let grad = ImageBuffer::from_channels(w, h, [&planes[0], &planes[1], &planes[2]]);
    Ok((value / n, grad))
}

/// Fraction of spectral magnitude mass outside the centred low-frequency
/// block of size `(U / block_divisor) x (V / block_divisor)`, summed over
/// channels.
pub fn out_of_band_fraction(img: &ImageBuffer, block_divisor: usize) -> f64 {
    let spec = magnitude_spectrum(img);
    let (w, h) = (spec.width as isize, spec.height as isize);
    let half_w = (spec.width / block_divisor.max(1)) as isize / 2;
    let half_h = (spec.height / block_divisor.max(1)) as isize / 2;
    let signed = |k: isize, n: isize| if k < (n + 1) / 2 { k } else { k - n };
    let mut total = 0.0;
    let mut outside = 0.0;
    for c in 0..CHANNELS {
        let plane = spec.plane(c);
        for v in 0..h {
            for u in 0..w {
                let m = plane[(v * w + u) as usize];
                total += m;
                let (su, sv) = (signed(u, w), signed(v, h));
                let inside = su >= -half_w.max(1) && su < half_w.max(1) && sv >= -half_h.max(1) && sv < half_h.max(1);
                if !inside {
                    outside += m;
                }
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct O(N^2) DFT magnitude of one channel.
    fn oracle_mags(img: &ImageBuffer, c: usize) -> Vec<f64> {
        let (w, h) = (img.width(), img.height());
        let mut out = Vec::new();
        for v in 0..h {
            for u in 0..w {
                let mut re = 0.0;
                let mut im = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        let ph = -2.0 * std::f64::consts::PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                        re += img.get(x, y, c) * ph.cos();
                        im += img.get(x, y, c) * ph.sin();
                    }
                }
                out.push((re * re + im * im).sqrt());
            }
        }
        out
    }

    fn oracle_discrepancy(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
        let mut s = 0.0;
        for c in 0..3 {
            for (x, y) in oracle_mags(a, c).iter().zip(oracle_mags(b, c)) {
                s += (x - y).abs();
            }
        }
        s / (a.pixels() * 3) as f64
    }

    fn pattern(w: usize, h: usize, seed: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y, c| (((x * 7 + y * 13 + c * 3 + seed) * 2654435761usize) % 1000) as f64 / 1000.0)
    }

    #[test]
    fn identical_is_zero() {
        let a = pattern(6, 4, 1);
        assert_eq!(dft_discrepancy(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn constants_differ_only_at_dc() {
        for (w, h) in [(4, 4), (5, 3), (8, 2)] {
            let a = ImageBuffer::filled(w, h, [0.2; 3]);
            let b = ImageBuffer::filled(w, h, [0.7; 3]);
            let d = dft_discrepancy(&a, &b).unwrap();
            assert!((d - 0.5).abs() < 1e-12, "{w}x{h}: {d}");
            assert!((oracle_discrepancy(&a, &b) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn circular_translation_is_invisible() {
        let a = pattern(4, 4, 3);
        let shifted = ImageBuffer::from_fn(4, 4, |x, y, c| a.get((x + 1) % 4, (y + 3) % 4, c));
        assert!(dft_discrepancy(&a, &shifted).unwrap() < 1e-12);
        assert!(oracle_discrepancy(&a, &shifted) < 1e-12);
    }

    #[test]
    fn fft_matches_direct_dft() {
        let a = pattern(6, 4, 5);
        let b = pattern(6, 4, 9);
        let fast = dft_discrepancy(&a, &b).unwrap();
        assert!((fast - oracle_discrepancy(&a, &b)).abs() < 1e-12);
    }

    fn noise(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        ImageBuffer::from_fn(w, h, |_, _, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 100_000) as f64 / 100_000.0
        })
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = noise(4, 4, 11);
        let b = noise(4, 4, 2);
        let (_, grad) = dft_discrepancy_grad(&a, &b).unwrap();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for i in 0..b.data().len() {
            let mut bp = b.clone();
            bp.data_mut()[i] += h;
            let mut bm = b.clone();
            bm.data_mut()[i] -= h;
            let fd = (dft_discrepancy(&a, &bp).unwrap() - dft_discrepancy(&a, &bm).unwrap()) / (2.0 * h);
            let an = grad.data()[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn dimension_mismatch() {
        assert!(dft_discrepancy(&ImageBuffer::new(4, 4), &ImageBuffer::new(4, 2)).is_err());
    }

    #[test]
    fn out_of_band_of_constant_is_zero_and_checker_is_one() {
        assert_eq!(out_of_band_fraction(&ImageBuffer::filled(8, 8, [0.5; 3]), 4), 0.0);
        let checker = ImageBuffer::from_fn(8, 8, |x, y, _| ((x + y) % 2) as f64 - 0.5);
        assert!((out_of_band_fraction(&checker, 4) - 1.0).abs() < 1e-12);
    }
}
