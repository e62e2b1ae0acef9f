//! Floating-point RGB image buffer with PNG and PFM export.
//!
//! Pixels are linear-light RGB in [0,1], interleaved row-major. PNG I/O
//! converts through 8-bit sRGB; PFM dumps raw f32 values (bottom-up rows,
//! little-endian, per the format's negative-scale convention).

use crate::render::RenderError;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        ImageBuffer {
            width,
            height,
            data: vec![0.0; (width * height * 3) as usize],
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        let mut img = ImageBuffer::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [f64; 3]) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_size(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean absolute difference over all pixels and channels.
    pub fn l1(&self, other: &ImageBuffer) -> Result<f64, RenderError> {
        if !self.same_size(other) {
            return Err(RenderError::DimensionMismatch);
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Mean squared error over all pixels and channels.
    pub fn mse(&self, other: &ImageBuffer) -> Result<f64, RenderError> {
        if !self.same_size(other) {
            return Err(RenderError::DimensionMismatch);
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn save_png<P: AsRef<Path>>(&self, path: P) -> Result<(), RenderError> {
        let mut out = image::RgbImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let p = self.pixel(x, y);
                out.put_pixel(
                    x,
                    y,
                    image::Rgb([
                        linear_to_srgb_u8(p[0]),
                        linear_to_srgb_u8(p[1]),
                        linear_to_srgb_u8(p[2]),
                    ]),
                );
            }
        }
        out.save(path.as_ref())
            .map_err(|e| RenderError::Io(format!("png save: {e}")))
    }

    pub fn load_png<P: AsRef<Path>>(path: P) -> Result<ImageBuffer, RenderError> {
        let img = image::open(path.as_ref())
            .map_err(|e| RenderError::Io(format!("png load: {e}")))?
            .into_rgb8();
        let mut buf = ImageBuffer::new(img.width(), img.height());
        for (x, y, px) in img.enumerate_pixels() {
            buf.set_pixel(
                x,
                y,
                [
                    srgb_u8_to_linear(px[0]),
                    srgb_u8_to_linear(px[1]),
                    srgb_u8_to_linear(px[2]),
                ],
            );
        }
        Ok(buf)
    }

    /// Writes a color PFM (f32, little-endian, rows bottom to top).
    pub fn save_pfm<P: AsRef<Path>>(&self, path: P) -> Result<(), RenderError> {
        let f = std::fs::File::create(path.as_ref())
            .map_err(|e| RenderError::Io(format!("pfm create: {e}")))?;
        let mut w = std::io::BufWriter::new(f);
        let header = format!("PF\n{} {}\n-1.0\n", self.width, self.height);
        w.write_all(header.as_bytes())
            .map_err(|e| RenderError::Io(format!("pfm write: {e}")))?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for c in self.pixel(x, y) {
                    w.write_all(&(c as f32).to_le_bytes())
                        .map_err(|e| RenderError::Io(format!("pfm write: {e}")))?;
                }
            }
        }
        Ok(())
    }

    pub fn load_pfm<P: AsRef<Path>>(path: P) -> Result<ImageBuffer, RenderError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path.as_ref())
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| RenderError::Io(format!("pfm read: {e}")))?;
        let err = |what: &str| RenderError::Io(format!("pfm parse: {what}"));
        // Header: three whitespace-terminated tokens.
        let mut pos = 0usize;
        let mut token = || -> Result<String, RenderError> {
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let s = std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| err("non-utf8 header"))?
                .to_string();
            pos += 1; // single whitespace separator
            Ok(s)
        };
        if token()? != "PF" {
            return Err(err("expected PF magic"));
        }
        let width: u32 = token()?.parse().map_err(|_| err("bad width"))?;
        let height: u32 = token()?.parse().map_err(|_| err("bad height"))?;
        let scale: f64 = token()?.parse().map_err(|_| err("bad scale"))?;
        if scale >= 0.0 {
            return Err(err("big-endian PFM unsupported"));
        }
        let need = (width * height * 3) as usize * 4;
        if bytes.len() < pos + need {
            return Err(err("truncated pixel data"));
        }
        let mut buf = ImageBuffer::new(width, height);
        let mut off = pos;
        for y in (0..height).rev() {
            for x in 0..width {
                let mut rgb = [0.0f64; 3];
                for c in &mut rgb {
                    let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
                    *c = v as f64;
                    off += 4;
                }
                buf.set_pixel(x, y, rgb);
            }
        }
        Ok(buf)
    }
}

fn linear_to_srgb_u8(v: f64) -> u8 {
    let v = v.clamp(0.0, 1.0);
    let s = if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0).round().clamp(0.0, 255.0) as u8
}

fn srgb_u8_to_linear(u: u8) -> f64 {
    let s = u as f64 / 255.0;
    if s <= 0.040_45 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}
