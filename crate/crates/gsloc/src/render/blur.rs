//! Separable 2D Gaussian blur for the coarse-to-fine schedule, plus the
//! exact adjoint used by the backward pass.
//!
//! The kernel covariance `delta` is unitless; the tap standard deviation is
//! `sigma = diag * sqrt(delta)` pixels, where `diag` is the image diagonal.
//! Taps are `exp(-i^2 / (2 sigma^2))` for `i` in `[-hw, hw]`, renormalized
//! to sum 1. The half-width is `min((L-1)/2, ceil(3.5 sigma))`, with the
//! kernel size `L` forced odd and clamped to the image size, so large-delta
//! kernels are truncated at `L` and near-identity kernels stay cheap.
//!
//! Borders reflect with edge duplication (`-1 -> 0`, `n -> n-1`). Because
//! of that, the adjoint is not a plain correlation at the borders: it is
//! implemented as the exact scatter transpose, and the dot-product test
//! `<Bx, y> = <x, B^T y>` pins it.

use super::ImageBuffer;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct BlurSpec {
    /// Unitless kernel covariance relative to the squared image diagonal.
    pub delta: f64,
    /// Nominal kernel size in pixels (clamped odd).
    pub kernel_size: u32,
}

impl BlurSpec {
    pub fn kernel(&self, width: u32, height: u32) -> Vec<f64> {
        let diag = ((width * width + height * height) as f64).sqrt();
        let sigma = diag * self.delta.max(0.0).sqrt();
        let max_hw = {
            let l = self.kernel_size.min(width.min(height));
            let l = if l % 2 == 0 { l.saturating_sub(1) } else { l };
            (l.max(1) - 1) / 2
        };
        let hw = ((3.5 * sigma).ceil() as u32).min(max_hw);
        let mut taps = Vec::with_capacity(2 * hw as usize + 1);
        if sigma <= 0.0 || hw == 0 {
            taps.push(1.0);
            return taps;
        }
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut sum = 0.0;
        for i in -(hw as i64)..=hw as i64 {
            let w = (-(i * i) as f64 * inv).exp();
            taps.push(w);
            sum += w;
        }
        for w in &mut taps {
            *w /= sum;
        }
        taps
    }
}

#[inline]
fn reflect(i: i64, n: i64) -> usize {
    if i < 0 {
        (-1 - i) as usize
    } else if i >= n {
        (2 * n - 1 - i) as usize
    } else {
        i as usize
    }
}

/// Horizontal gather pass: out[x] = sum_t k[t] in[reflect(x - t)].
fn pass_h(input: &[f64], out: &mut [f64], w: usize, h: usize, taps: &[f64]) {
    let hw = (taps.len() / 2) as i64;
    for y in 0..h {
        let row_in = &input[y * w * 3..][..w * 3];
        let row_out = &mut out[y * w * 3..][..w * 3];
        for x in 0..w as i64 {
            let mut acc = [0.0f64; 3];
            for (ti, k) in taps.iter().enumerate() {
                let sx = reflect(x - (ti as i64 - hw), w as i64) * 3;
                acc[0] += k * row_in[sx];
                acc[1] += k * row_in[sx + 1];
                acc[2] += k * row_in[sx + 2];
            }
            let o = x as usize * 3;
            row_out[o] = acc[0];
            row_out[o + 1] = acc[1];
            row_out[o + 2] = acc[2];
        }
    }
}

/// Vertical gather pass.
fn pass_v(input: &[f64], out: &mut [f64], w: usize, h: usize, taps: &[f64]) {
    let hw = (taps.len() / 2) as i64;
    for y in 0..h as i64 {
        let row_out = &mut out[y as usize * w * 3..][..w * 3];
        for (ti, k) in taps.iter().enumerate() {
            let sy = reflect(y - (ti as i64 - hw), h as i64);
            let row_in = &input[sy * w * 3..][..w * 3];
            if ti == 0 {
                for (o, i) in row_out.iter_mut().zip(row_in) {
                    *o = k * i;
                }
            } else {
                for (o, i) in row_out.iter_mut().zip(row_in) {
                    *o += k * i;
                }
            }
        }
    }
}

/// Horizontal scatter pass (transpose of `pass_h`).
fn pass_h_adjoint(input: &[f64], out: &mut [f64], w: usize, h: usize, taps: &[f64]) {
    let hw = (taps.len() / 2) as i64;
    out.fill(0.0);
    for y in 0..h {
        let row_in = &input[y * w * 3..][..w * 3];
        let row_out = &mut out[y * w * 3..][..w * 3];
        for x in 0..w as i64 {
            let i = x as usize * 3;
            let v = [row_in[i], row_in[i + 1], row_in[i + 2]];
            for (ti, k) in taps.iter().enumerate() {
                let dx = reflect(x - (ti as i64 - hw), w as i64) * 3;
                row_out[dx] += k * v[0];
                row_out[dx + 1] += k * v[1];
                row_out[dx + 2] += k * v[2];
            }
        }
    }
}

/// Vertical scatter pass (transpose of `pass_v`).
fn pass_v_adjoint(input: &[f64], out: &mut [f64], w: usize, h: usize, taps: &[f64]) {
    let hw = (taps.len() / 2) as i64;
    out.fill(0.0);
    for y in 0..h as i64 {
        let row_in = &input[y as usize * w * 3..][..w * 3];
        for (ti, k) in taps.iter().enumerate() {
            let dy = reflect(y - (ti as i64 - hw), h as i64);
            let row_out = &mut out[dy * w * 3..][..w * 3];
            for (o, i) in row_out.iter_mut().zip(row_in) {
                *o += k * i;
            }
        }
    }
}

/// B = V ∘ H applied to the image.
pub fn blur_image(img: &ImageBuffer, spec: &BlurSpec) -> ImageBuffer {
    let taps = spec.kernel(img.width(), img.height());
    if taps.len() == 1 {
        return img.clone();
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut tmp = vec![0.0f64; w * h * 3];
    let mut out = ImageBuffer::new(img.width(), img.height());
    pass_h(img.data(), &mut tmp, w, h, &taps);
    pass_v(&tmp, out.data_mut(), w, h, &taps);
    out
}

/// B^T = H^T ∘ V^T, the exact transpose of [`blur_image`].
pub fn blur_adjoint(img: &ImageBuffer, spec: &BlurSpec) -> ImageBuffer {
    let taps = spec.kernel(img.width(), img.height());
    if taps.len() == 1 {
        return img.clone();
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut tmp = vec![0.0f64; w * h * 3];
    let mut out = ImageBuffer::new(img.width(), img.height());
    pass_v_adjoint(img.data(), &mut tmp, w, h, &taps);
    pass_h_adjoint(&tmp, out.data_mut(), w, h, &taps);
    out
}
