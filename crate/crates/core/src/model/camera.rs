use serde::{Deserialize, Serialize};

use super::Mat3;
use crate::error::{Error, Result};

/// Pinhole camera with an OpenCV-style frame (x right, y down, z forward).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    pub translation: [f64; 3],
    pub near: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

impl Camera {
    /// Camera at `eye` looking at `target`, with the image y axis pointing
    /// away from `up`. The principal point is the image centre.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3], width: usize, height: usize, focal: f64) -> Self {
        let forward = normalize(sub(target, eye));
        let mut right = cross(forward, up);
        if right.iter().map(|v| v * v).sum::<f64>() < 1e-20 {
            right = cross(forward, [1.0, 0.0, 0.0]);
        }
        let right = normalize(right);
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let translation = [
            -(rotation[0][0] * eye[0] + rotation[0][1] * eye[1] + rotation[0][2] * eye[2]),
            -(rotation[1][0] * eye[0] + rotation[1][1] * eye[1] + rotation[1][2] * eye[2]),
            -(rotation[2][0] * eye[0] + rotation[2][1] * eye[1] + rotation[2][2] * eye[2]),
        ];
        Camera {
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation,
            translation,
            near: 0.01,
        }
    }

    #[inline]
    pub fn world_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }

    /// Camera centre in world coordinates, `-R^T t`.
    pub fn center(&self) -> [f64; 3] {
        let r = &self.rotation;
        let t = self.translation;
        [
            -(r[0][0] * t[0] + r[1][0] * t[1] + r[2][0] * t[2]),
            -(r[0][1] * t[0] + r[1][1] * t[1] + r[2][1] * t[2]),
            -(r[0][2] * t[0] + r[1][2] * t[1] + r[2][2] * t[2]),
        ]
    }

    /// Optical axis in world coordinates.
    pub fn forward(&self) -> [f64; 3] {
        self.rotation[2]
    }

    /// Pixel coordinates of a world point, `None` when behind the near plane.
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 2]> {
        let c = self.world_to_camera(p);
        if c[2] <= self.near {
            return None;
        }
        Some([self.fx * c[0] / c[2] + self.cx, self.fy * c[1] / c[2] + self.cy])
    }

    /// Same pose, image and intrinsics scaled by `1 / 2^halvings`.
    pub fn downscaled(&self, halvings: u32) -> Camera {
        let s = 1.0 / (1u64 << halvings) as f64;
        Camera {
            width: self.width >> halvings,
            height: self.height >> halvings,
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("camera image must be non-empty".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.near > 0.0) {
            return Err(Error::Invalid("camera needs fx, fy, near > 0".into()));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-6 {
                    return Err(Error::Invalid("camera rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }
}
