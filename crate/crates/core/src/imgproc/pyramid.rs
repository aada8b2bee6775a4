use super::resample::check_even;
use super::{reflect_index, ImageBuffer};
use crate::error::Result;

/// Burt–Adelson generating kernel with a = 0.375.
pub const BURT_ADELSON: [f64; 5] = [0.0625, 0.25, 0.375, 0.25, 0.0625];

/// Symmetric 5-tap separable kernel for REDUCE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReduceKernel(pub [f64; 5]);

impl Default for ReduceKernel {
    fn default() -> Self {
        ReduceKernel(BURT_ADELSON)
    }
}

/// REDUCE: separable blur with reflect boundaries, then keep even rows/columns.
pub fn reduce(img: &ImageBuffer, kernel: &ReduceKernel) -> Result<ImageBuffer> {
    check_even("reduce", img)?;
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = (w / 2, h / 2);
    let k = &kernel.0;

    // horizontal pass, only even columns are needed
    let mut tmp = vec![0.0; ow * h * 3];
    for y in 0..h {
        for ox in 0..ow {
            let cx = 2 * ox as isize;
            let mut acc = [0.0; 3];
            for (t, &wt) in k.iter().enumerate() {
                let sx = reflect_index(cx + t as isize - 2, w);
                let p = img.pixel(sx, y);
                acc[0] += wt * p[0];
                acc[1] += wt * p[1];
                acc[2] += wt * p[2];
            }
            let o = (y * ow + ox) * 3;
            tmp[o..o + 3].copy_from_slice(&acc);
        }
    }
    // vertical pass, only even rows
    let mut out = ImageBuffer::new(ow, oh);
    let dst = out.data_mut();
    for oy in 0..oh {
        let cy = 2 * oy as isize;
        for (t, &wt) in k.iter().enumerate() {
            let sy = reflect_index(cy + t as isize - 2, h);
            let src = &tmp[sy * ow * 3..(sy + 1) * ow * 3];
            let row = &mut dst[oy * ow * 3..(oy + 1) * ow * 3];
            for (d, s) in row.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    Ok(out)
}

/// Applies [`reduce`] `times` times.
pub fn reduce_times(img: &ImageBuffer, kernel: &ReduceKernel, times: usize) -> Result<ImageBuffer> {
    let mut cur = img.clone();
    for _ in 0..times {
        cur = reduce(&cur, kernel)?;
    }
    Ok(cur)
}

/// Transpose of [`reduce`]: maps a gradient on the half-size output back onto
/// an input of size `width x height`.
pub fn reduce_adjoint(grad: &ImageBuffer, kernel: &ReduceKernel, width: usize, height: usize) -> ImageBuffer {
    let (ow, oh) = (grad.width(), grad.height());
    debug_assert_eq!((ow * 2, oh * 2), (width, height));
    let k = &kernel.0;

    // adjoint of the vertical pass
    let mut tmp = vec![0.0; ow * height * 3];
    let g = grad.data();
    for oy in 0..oh {
        let cy = 2 * oy as isize;
        let src = &g[oy * ow * 3..(oy + 1) * ow * 3];
        for (t, &wt) in k.iter().enumerate() {
            let sy = reflect_index(cy + t as isize - 2, height);
            let row = &mut tmp[sy * ow * 3..(sy + 1) * ow * 3];
            for (d, s) in row.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    // adjoint of the horizontal pass
    let mut out = ImageBuffer::new(width, height);
    let dst = out.data_mut();
    for y in 0..height {
        for ox in 0..ow {
            let cx = 2 * ox as isize;
            let o = (y * ow + ox) * 3;
            for (t, &wt) in k.iter().enumerate() {
                let sx = reflect_index(cx + t as isize - 2, width);
                let d = (y * width + sx) * 3;
                for c in 0..3 {
                    dst[d + c] += wt * tmp[o + c];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    /// Full-resolution 2-D convolution with the outer-product kernel, then
    /// subsampling, evaluated term by term.
    fn oracle_reduce(img: &ImageBuffer, k: &[f64; 5]) -> ImageBuffer {
        let (w, h) = (img.width(), img.height());
        ImageBuffer::from_fn(w / 2, h / 2, |ox, oy, c| {
            let mut acc = 0.0;
            for ty in 0..5 {
                for tx in 0..5 {
                    let sy = reflect_index(2 * oy as isize + ty as isize - 2, h);
                    let sx = reflect_index(2 * ox as isize + tx as isize - 2, w);
                    acc += k[ty] * k[tx] * img.get(sx, sy, c);
                }
            }
            acc
        })
    }

    #[test]
    fn constant_preserved() {
        let img = ImageBuffer::filled(8, 6, [0.1, 0.5, 1.0]);
        let out = reduce(&img, &ReduceKernel::default()).unwrap();
        assert_eq!((out.width(), out.height()), (4, 3));
        assert!(out.mean_abs_diff(&ImageBuffer::filled(4, 3, [0.1, 0.5, 1.0])).unwrap() < 1e-15);
        let q = reduce_times(&ImageBuffer::filled(8, 8, [0.7; 3]), &ReduceKernel::default(), 2).unwrap();
        assert_eq!((q.width(), q.height()), (2, 2));
        assert!(q.data().iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn centered_impulse_gives_kernel_taps() {
        let mut img = ImageBuffer::new(8, 8);
        img.set(4, 4, 0, 1.0);
        let out = reduce(&img, &ReduceKernel::default()).unwrap();
        let expect = oracle_reduce(&img, &BURT_ADELSON);
        assert!(out.mean_abs_diff(&expect).unwrap() < 1e-15);
        // out(ox, oy) = k[4 - 2 ox + 2] * k[4 - 2 oy + 2] for taps within range
        let k = BURT_ADELSON;
        assert!((out.get(2, 2, 0) - k[2] * k[2]).abs() < 1e-15);
        assert!((out.get(1, 2, 0) - k[4] * k[2]).abs() < 1e-15);
        assert!((out.get(3, 3, 0) - k[0] * k[0]).abs() < 1e-15);
        assert_eq!(out.get(0, 0, 0), 0.0);
        assert_eq!(out.get(2, 2, 1), 0.0);
    }

    #[test]
    fn matches_direct_convolution_on_random_image() {
        let img = ImageBuffer::from_fn(10, 6, |x, y, c| ((x * 31 + y * 17 + c * 7) % 13) as f64 / 12.0);
        let out = reduce(&img, &ReduceKernel::default()).unwrap();
        assert!(out.mean_abs_diff(&oracle_reduce(&img, &BURT_ADELSON)).unwrap() < 1e-14);
        let tiny = ImageBuffer::from_fn(2, 2, |x, y, _| (x + 2 * y) as f64);
        let out = reduce(&tiny, &ReduceKernel::default()).unwrap();
        assert!(out.mean_abs_diff(&oracle_reduce(&tiny, &BURT_ADELSON)).unwrap() < 1e-15);
    }

    #[test]
    fn odd_dimension_error() {
        assert!(matches!(
            reduce(&ImageBuffer::new(7, 8), &ReduceKernel::default()),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn adjoint_identity() {
        let x = ImageBuffer::from_fn(8, 6, |x, y, c| ((x * 5 + y * 3 + c) % 7) as f64 - 3.0);
        let y = ImageBuffer::from_fn(4, 3, |x, y, c| ((x * 2 + y * 11 + c * 3) % 5) as f64 - 2.0);
        let kernel = ReduceKernel::default();
        let rx = reduce(&x, &kernel).unwrap();
        let aty = reduce_adjoint(&y, &kernel, 8, 6);
        let lhs: f64 = rx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }
}
