//! Real spherical-harmonic color evaluation, degrees 0..=2, with analytic
//! gradients with respect to the (unit) view direction.
//!
//! Constants and signs follow the usual splatting convention; the result is
//! offset by +0.5 so a zero coefficient vector is mid-gray. Values are
//! returned unclamped; the rasterizer clamps to [0,1] and masks gradients
//! of clamped channels.

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];

/// View-dependent color for a unit direction; `sh.len()` selects the degree
/// (1, 4 or 9 coefficients).
pub fn sh_eval(sh: &[[f64; 3]], dir: &[f64; 3]) -> [f64; 3] {
    sh_eval_with_grad(sh, dir).0
}

/// Color plus `d color[ch] / d dir[axis]` as `grad[ch][axis]`.
pub fn sh_eval_with_grad(sh: &[[f64; 3]], dir: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let [x, y, z] = *dir;
    let mut color = [0.0f64; 3];
    let mut grad = [[0.0f64; 3]; 3];
    for ch in 0..3 {
        color[ch] = 0.5 + SH_C0 * sh[0][ch];
    }
    if sh.len() >= 4 {
        for ch in 0..3 {
            color[ch] += SH_C1 * (-y * sh[1][ch] + z * sh[2][ch] - x * sh[3][ch]);
            grad[ch][0] += -SH_C1 * sh[3][ch];
            grad[ch][1] += -SH_C1 * sh[1][ch];
            grad[ch][2] += SH_C1 * sh[2][ch];
        }
    }
    if sh.len() >= 9 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        for ch in 0..3 {
            color[ch] += SH_C2[0] * x * y * sh[4][ch]
                + SH_C2[1] * y * z * sh[5][ch]
                + SH_C2[2] * (2.0 * zz - xx - yy) * sh[6][ch]
                + SH_C2[3] * x * z * sh[7][ch]
                + SH_C2[4] * (xx - yy) * sh[8][ch];
            grad[ch][0] += SH_C2[0] * y * sh[4][ch]
                + SH_C2[2] * (-2.0 * x) * sh[6][ch]
                + SH_C2[3] * z * sh[7][ch]
                + SH_C2[4] * (2.0 * x) * sh[8][ch];
            grad[ch][1] += SH_C2[0] * x * sh[4][ch]
                + SH_C2[1] * z * sh[5][ch]
                + SH_C2[2] * (-2.0 * y) * sh[6][ch]
                + SH_C2[4] * (-2.0 * y) * sh[8][ch];
            grad[ch][2] += SH_C2[1] * y * sh[5][ch]
                + SH_C2[2] * (4.0 * z) * sh[6][ch]
                + SH_C2[3] * x * sh[7][ch];
        }
    }
    (color, grad)
}
