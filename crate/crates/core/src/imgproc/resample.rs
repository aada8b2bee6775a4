use super::ImageBuffer;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleFactor {
    Half,
    Double,
}

impl ResampleFactor {
    pub fn scale(self) -> f64 {
        match self {
            ResampleFactor::Half => 0.5,
            ResampleFactor::Double => 2.0,
        }
    }
}

/// Bilinear resampling by 0.5 or 2, applied `times` times.
///
/// Uses half-pixel centers (`src = (dst + 0.5) / scale - 0.5`, clamped to the
/// edge), so halving averages each 2x2 block and doubling interpolates between
/// neighbours with edge replication.
pub fn resample_bilinear(img: &ImageBuffer, factor: ResampleFactor, times: usize) -> Result<ImageBuffer> {
    let mut cur = img.clone();
    for _ in 0..times {
        cur = match factor {
            ResampleFactor::Half => {
                check_even("resample_bilinear", &cur)?;
                resample_once(&cur, cur.width() / 2, cur.height() / 2, 0.5)
            }
            ResampleFactor::Double => resample_once(&cur, cur.width() * 2, cur.height() * 2, 2.0),
        };
    }
    Ok(cur)
}

/// Low-passed ground truth for level `k` of `levels`: the image halved
/// `levels - k` times and doubled back to full size.
pub fn lowpass_gt(img: &ImageBuffer, levels: u32, k: u32) -> Result<ImageBuffer> {
    if k < 1 || k > levels {
        return Err(Error::LevelOutOfRange { level: k, max: levels });
    }
    let times = (levels - k) as usize;
    if times == 0 {
        return Ok(img.clone());
    }
    let down = resample_bilinear(img, ResampleFactor::Half, times)?;
    resample_bilinear(&down, ResampleFactor::Double, times)
}

pub(crate) fn check_even(op: &'static str, img: &ImageBuffer) -> Result<()> {
    if img.width() % 2 != 0 || img.width() < 2 {
        return Err(Error::NotDivisible {
            op,
            dim: "width",
            size: img.width(),
        });
    }
    if img.height() % 2 != 0 || img.height() < 2 {
        return Err(Error::NotDivisible {
            op,
            dim: "height",
            size: img.height(),
        });
    }
    Ok(())
}

/// Two taps `(i0, i1, w1)` per output coordinate along one axis.
fn axis_taps(n_in: usize, n_out: usize, scale: f64) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) / scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let w1 = src - i0 as f64;
            (i0, i1, if i0 == i1 { 0.0 } else { w1 })
        })
        .collect()
}

fn resample_once(img: &ImageBuffer, w: usize, h: usize, scale: f64) -> ImageBuffer {
    let xs = axis_taps(img.width(), w, scale);
    let ys = axis_taps(img.height(), h, scale);
    let mut out = ImageBuffer::new(w, h);
    for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let top = img.get(x0, y0, c) * (1.0 - wx) + img.get(x1, y0, c) * wx;
                let bot = img.get(x0, y1, c) * (1.0 - wx) + img.get(x1, y1, c) * wx;
                out.set(ox, oy, c, top * (1.0 - wy) + bot * wy);
            }
        }
    }
    out
}
