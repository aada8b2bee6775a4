use super::pyramid::{reduce_adjoint, reduce_times};
use super::ssim::{ssim, ssim_grad};
use super::{ImageBuffer, ReduceKernel};
use crate::error::Result;

pub fn l1_mean(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.mean_abs_diff(b)
}

/// Mean absolute difference and its subgradient with respect to `b`
/// (zero where the images agree).
pub fn l1_mean_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    a.same_dims(b)?;
    let n = a.data().len() as f64;
    let mut grad = ImageBuffer::new(b.width(), b.height());
    let mut sum = 0.0;
    for ((g, x), y) in grad.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        let d = y - x;
        sum += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

/// Both images reduced `times` times, then `(1 - w) * L1 + w * (1 - SSIM)`.
pub fn spatial_discrepancy(
    gt: &ImageBuffer,
    render: &ImageBuffer,
    lambda_ssim: f64,
    times: usize,
    kernel: &ReduceKernel,
) -> Result<f64> {
    gt.same_dims(render)?;
    let g = reduce_times(gt, kernel, times)?;
    let r = reduce_times(render, kernel, times)?;
    let mut value = (1.0 - lambda_ssim) * l1_mean(&g, &r)?;
    if lambda_ssim != 0.0 {
        value += lambda_ssim * (1.0 - ssim(&g, &r)?);
    }
    Ok(value)
}

/// [`spatial_discrepancy`] and its gradient with respect to `render`.
pub fn spatial_discrepancy_grad(
    gt: &ImageBuffer,
    render: &ImageBuffer,
    lambda_ssim: f64,
    times: usize,
    kernel: &ReduceKernel,
) -> Result<(f64, ImageBuffer)> {
    gt.same_dims(render)?;
    let g = reduce_times(gt, kernel, times)?;
    let mut chain = Vec::with_capacity(times + 1);
    chain.push(render.clone());
    for i in 0..times {
        let next = super::reduce(&chain[i], kernel)?;
        chain.push(next);
    }
    let r = chain.last().expect("chain is never empty");

    let (l1, mut grad) = l1_mean_grad(&g, r)?;
    grad.scale(1.0 - lambda_ssim);
    let mut value = (1.0 - lambda_ssim) * l1;
    if lambda_ssim != 0.0 {
        let (s, mut sg) = ssim_grad(&g, r)?;
        value += lambda_ssim * (1.0 - s);
        sg.scale(-lambda_ssim);
        grad.add_assign(&sg);
    }
    for level in (0..times).rev() {
        let src = &chain[level];
        grad = reduce_adjoint(&grad, kernel, src.width(), src.height());
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::{reduce, ssim};

    fn noise(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut s = seed ^ 0x9e3779b97f4a7c15;
        ImageBuffer::from_fn(w, h, |_, _, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 10_000) as f64 / 10_000.0
        })
    }

    #[test]
    fn equal_images_give_zero() {
        let a = noise(16, 16, 1);
        for t in 0..3 {
            assert!(spatial_discrepancy(&a, &a, 0.2, t, &ReduceKernel::default()).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn pure_l1_on_constants() {
        let a = ImageBuffer::filled(8, 8, [0.2; 3]);
        let b = ImageBuffer::filled(8, 8, [0.65; 3]);
        let v = spatial_discrepancy(&a, &b, 0.0, 0, &ReduceKernel::default()).unwrap();
        assert!((v - 0.45).abs() < 1e-14, "{v}");
    }

    #[test]
    fn composes_reduce_l1_and_ssim() {
        let a = noise(16, 16, 2);
        let b = noise(16, 16, 3);
        let k = ReduceKernel::default();
        let (ra, rb) = (reduce(&a, &k).unwrap(), reduce(&b, &k).unwrap());
        let l1: f64 = ra.data().iter().zip(rb.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / ra.data().len() as f64;
        let expect = 0.8 * l1 + 0.2 * (1.0 - ssim(&ra, &rb).unwrap());
        let got = spatial_discrepancy(&a, &b, 0.2, 1, &k).unwrap();
        assert!((got - expect).abs() < 1e-14);
        let (gv, _) = spatial_discrepancy_grad(&a, &b, 0.2, 1, &k).unwrap();
        assert!((gv - got).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = noise(16, 16, 4);
        let b = noise(16, 16, 5);
        let k = ReduceKernel::default();
        for times in [0, 1, 2] {
            let (_, grad) = spatial_discrepancy_grad(&a, &b, 0.2, times, &k).unwrap();
            let h = 1e-6;
            for i in (0..b.data().len()).step_by(37) {
                let mut bp = b.clone();
                bp.data_mut()[i] += h;
                let mut bm = b.clone();
                bm.data_mut()[i] -= h;
                let fd = (spatial_discrepancy(&a, &bp, 0.2, times, &k).unwrap()
                    - spatial_discrepancy(&a, &bm, 0.2, times, &k).unwrap())
                    / (2.0 * h);
                let an = grad.data()[i];
                assert!((fd - an).abs() <= 1e-4 * fd.abs().max(1e-4), "t={times} i={i}: {fd} vs {an}");
            }
        }
    }
}
