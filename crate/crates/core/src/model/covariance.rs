pub type Mat3 = [[f64; 3]; 3];

/// Rotation matrix of `(w, x, y, z)`; the quaternion is normalized first.
pub fn quat_to_rotation(q: [f64; 4]) -> Mat3 {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = if n > 0.0 {
        (q[0] / n, q[1] / n, q[2] / n, q[3] / n)
    } else {
        (1.0, 0.0, 0.0, 0.0)
    };
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// `R S S^T R^T` with `S = diag(exp(log_scale))`.
pub fn build_covariance(log_scale: [f64; 3], rotation: [f64; 4]) -> Mat3 {
    let r = quat_to_rotation(rotation);
    let s2 = log_scale.map(|v| (2.0 * v).exp());
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| r[i][k] * s2[k] * r[j][k]).sum();
        }
    }
    out
}
