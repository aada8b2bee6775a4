pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;

/// How levels >= 2 interpret their SH output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ColorMode {
    /// Levels >= 2 map `raw` to the signed range `2 raw - 1`.
    #[default]
    Residual,
    /// Every level uses `raw` directly (residual-color ablation).
    Plain,
}

/// SH basis values at `dir`, in the 3D-GS sign convention.
pub fn sh_basis(degree: u32, dir: [f64; 3]) -> [f64; 4] {
    let mut b = [SH_C0, 0.0, 0.0, 0.0];
    if degree >= 1 {
        let [x, y, z] = dir;
        b[1] = -SH_C1 * y;
        b[2] = SH_C1 * z;
        b[3] = -SH_C1 * x;
    }
    b
}

/// Unclamped SH color plus the 0.5 offset.
pub fn eval_raw(sh: &[f64], degree: u32, dir: [f64; 3]) -> [f64; 3] {
    let basis = sh_basis(degree, dir);
    let nb = sh.len() / 3;
    let mut out = [0.5; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o += (0..nb).map(|k| sh[c * nb + k] * basis[k]).sum::<f64>();
    }
    out
}

/// Color of a Gaussian at `level`: raw for level 1, `2 raw - 1` for higher
/// levels in residual mode.
pub fn eval_color(sh: &[f64], degree: u32, dir: [f64; 3], level: u32, mode: ColorMode) -> [f64; 3] {
    let raw = eval_raw(sh, degree, dir);
    if level >= 2 && mode == ColorMode::Residual {
        raw.map(|v| 2.0 * v - 1.0)
    } else {
        raw
    }
}
