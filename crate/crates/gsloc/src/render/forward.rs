//! Depth-ordered alpha-blending rasterizer.
//!
//! Splats are projected once per frame, sorted by depth (ties broken by
//! scene index), and binned into image rows. Pixels walk their row's list
//! front to back and stop once transmittance drops below the floor.
//!
//! Work is partitioned into fixed 8-row bands. The parallel path hands
//! bands to rayon; the sequential path loops over the same bands, so both
//! produce bit-identical images regardless of thread count.

use super::blur::{blur_image, BlurSpec};
use super::project::{prepare_splat, BackwardData, Prepared};
use super::{Camera, ImageBuffer, RenderError, TRANSMITTANCE_MIN};
use crate::scene::GaussianScene;

pub(crate) const BAND_H: u32 = 8;

/// Execution options for a render call.
#[derive(Debug, Clone, Copy)]
pub struct RenderOpts {
    /// Rasterize bands on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for RenderOpts {
    fn default() -> Self {
        RenderOpts {
            parallel: cfg!(feature = "parallel"),
        }
    }
}

impl RenderOpts {
    pub fn sequential() -> Self {
        RenderOpts { parallel: false }
    }
}

/// Projected, depth-sorted, row-binned splats for one camera.
pub(crate) struct FrameSplats {
    pub splats: Vec<Prepared>,
    /// Parallel to `splats` when prepared with backward data, else empty.
    pub backward: Vec<BackwardData>,
    row_offsets: Vec<u32>,
    row_entries: Vec<u32>,
}

impl FrameSplats {
    #[inline]
    pub fn row(&self, y: u32) -> &[u32] {
        let lo = self.row_offsets[y as usize] as usize;
        let hi = self.row_offsets[y as usize + 1] as usize;
        &self.row_entries[lo..hi]
    }
}

pub(crate) fn prepare_frame(
    scene: &GaussianScene,
    cam: &Camera,
    with_backward: bool,
) -> Result<FrameSplats, RenderError> {
    cam.validate()?;
    if scene.is_empty() {
        return Err(RenderError::EmptyScene);
    }
    let cam_center = cam.pose.camera_center();
    let mut items: Vec<(Prepared, Option<BackwardData>)> =
        Vec::with_capacity(scene.gaussians.len());
    for (i, g) in scene.gaussians.iter().enumerate() {
        if let Some(pb) = prepare_splat(g, cam, &cam_center, i, with_backward) {
            items.push(pb);
        }
    }
    // Stable sort keeps scene order for equal depths.
    items.sort_by(|a, b| a.0.depth.partial_cmp(&b.0.depth).unwrap());

    let mut splats = Vec::with_capacity(items.len());
    let mut backward = Vec::with_capacity(if with_backward { items.len() } else { 0 });
    for (p, b) in items {
        splats.push(p);
        if let Some(b) = b {
            backward.push(b);
        }
    }

    // Row bins via counting sort; entries stay depth-ordered per row.
    let h = cam.height as usize;
    let mut row_offsets = vec![0u32; h + 2];
    for s in &splats {
        for y in s.y_min..=s.y_max {
            row_offsets[y as usize + 2] += 1;
        }
    }
    for i in 2..row_offsets.len() {
        row_offsets[i] += row_offsets[i - 1];
    }
    let total = row_offsets[h + 1] as usize;
    let mut row_entries = vec![0u32; total];
    for (si, s) in splats.iter().enumerate() {
        for y in s.y_min..=s.y_max {
            let cursor = &mut row_offsets[y as usize + 1];
            row_entries[*cursor as usize] = si as u32;
            *cursor += 1;
        }
    }
    row_offsets.pop();
    Ok(FrameSplats {
        splats,
        backward,
        row_offsets,
        row_entries,
    })
}

/// Alpha of a splat at a pixel center, or `None` when the pixel is outside
/// the footprint or below the alpha cutoff. Returns `(alpha, w, dx, dy)`.
#[inline(always)]
pub(crate) fn splat_alpha(s: &Prepared, x: i32, px: f64, py: f64) -> Option<(f64, f64, f64, f64)> {
    if x < s.x_min || x > s.x_max {
        return None;
    }
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    let q = s.inv[0] * dx * dx + 2.0 * s.inv[1] * dx * dy + s.inv[2] * dy * dy;
    if q > s.q_cut {
        return None; // alpha below 1/255
    }
    let w = (-0.5 * q).exp();
    Some(((s.opacity * w).min(super::ALPHA_MAX), w, dx, dy))
}

fn render_rows(
    frame: &FrameSplats,
    width: u32,
    background: [f64; 3],
    y0: u32,
    y1: u32,
    out: &mut [f64],
) {
    let w = width as usize;
    for y in y0..y1 {
        let entries = frame.row(y);
        let py = y as f64 + 0.5;
        let row_out = &mut out[(y - y0) as usize * w * 3..][..w * 3];
        for x in 0..w {
            let px = x as f64 + 0.5;
            let mut t = 1.0f64;
            let mut c = [0.0f64; 3];
            for &si in entries {
                let s = &frame.splats[si as usize];
                if let Some((alpha, _, _, _)) = splat_alpha(s, x as i32, px, py) {
                    let ta = t * alpha;
                    c[0] += ta * s.color[0];
                    c[1] += ta * s.color[1];
                    c[2] += ta * s.color[2];
                    t *= 1.0 - alpha;
                    if t < TRANSMITTANCE_MIN {
                        break;
                    }
                }
            }
            row_out[x * 3] = c[0] + background[0] * t;
            row_out[x * 3 + 1] = c[1] + background[1] * t;
            row_out[x * 3 + 2] = c[2] + background[2] * t;
        }
    }
}

pub(crate) fn render_from_frame(
    frame: &FrameSplats,
    cam: &Camera,
    background: [f64; 3],
    opts: &RenderOpts,
) -> ImageBuffer {
    let (w, h) = (cam.width, cam.height);
    let mut img = ImageBuffer::new(w, h);
    let band_len = (BAND_H * w * 3) as usize;

    #[cfg(feature = "parallel")]
    if opts.parallel {
        use rayon::prelude::*;
        img.data_mut()
            .par_chunks_mut(band_len)
            .enumerate()
            .for_each(|(b, out)| {
                let y0 = b as u32 * BAND_H;
                let y1 = (y0 + BAND_H).min(h);
                render_rows(frame, w, background, y0, y1, out);
            });
        return img;
    }
    let _ = opts;
    for (b, out) in img.data_mut().chunks_mut(band_len).enumerate() {
        let y0 = b as u32 * BAND_H;
        let y1 = (y0 + BAND_H).min(h);
        render_rows(frame, w, background, y0, y1, out);
    }
    img
}

/// Renders the scene through `cam`. Fails on an empty scene or bad camera.
pub fn render(
    scene: &GaussianScene,
    cam: &Camera,
    opts: &RenderOpts,
) -> Result<ImageBuffer, RenderError> {
    let frame = prepare_frame(scene, cam, false)?;
    Ok(render_from_frame(&frame, cam, scene.background, opts))
}

/// Per-pixel depth at which accumulated alpha first reaches 0.5;
/// `f64::INFINITY` where it never does. Used for voxel occlusion tests.
pub fn render_depth(
    scene: &GaussianScene,
    cam: &Camera,
    opts: &RenderOpts,
) -> Result<DepthMap, RenderError> {
    let frame = prepare_frame(scene, cam, false)?;
    let (w, h) = (cam.width, cam.height);
    let mut data = vec![f64::INFINITY; (w * h) as usize];
    let band_len = (BAND_H * w) as usize;

    let fill = |b: usize, out: &mut [f64]| {
        let y0 = b as u32 * BAND_H;
        let y1 = (y0 + BAND_H).min(h);
        for y in y0..y1 {
            let entries = frame.row(y);
            let py = y as f64 + 0.5;
            let row = &mut out[(y - y0) as usize * w as usize..][..w as usize];
            for (x, d) in row.iter_mut().enumerate() {
                let px = x as f64 + 0.5;
                let mut t = 1.0f64;
                for &si in entries {
                    let s = &frame.splats[si as usize];
                    if let Some((alpha, _, _, _)) = splat_alpha(s, x as i32, px, py) {
                        t *= 1.0 - alpha;
                        if t <= 0.5 {
                            *d = s.depth;
                            break;
                        }
                    }
                }
            }
        }
    };

    #[cfg(feature = "parallel")]
    if opts.parallel {
        use rayon::prelude::*;
        data.par_chunks_mut(band_len)
            .enumerate()
            .for_each(|(b, out)| fill(b, out));
        return Ok(DepthMap { width: w, height: h, data });
    }
    let _ = opts;
    for (b, out) in data.chunks_mut(band_len).enumerate() {
        fill(b, out);
    }
    Ok(DepthMap { width: w, height: h, data })
}

#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthMap {
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }
}

/// L1 photometric loss between the rendered view and a target, optionally
/// with both images blurred by the same kernel.
pub fn photometric_loss(
    scene: &GaussianScene,
    cam: &Camera,
    target: &ImageBuffer,
    blur: Option<&BlurSpec>,
    opts: &RenderOpts,
) -> Result<f64, RenderError> {
    if target.width() != cam.width || target.height() != cam.height {
        return Err(RenderError::DimensionMismatch);
    }
    let rendered = render(scene, cam, opts)?;
    match blur {
        None => rendered.l1(target),
        Some(spec) => {
            let rb = blur_image(&rendered, spec);
            let tb = blur_image(target, spec);
            rb.l1(&tb)
        }
    }
}
