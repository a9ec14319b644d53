//! RGB rasters and the native classical upscalers.
//!
//! Resampling works directly on the stored 8-bit values (no linear-light
//! conversion). Lanczos uses center-aligned coordinates, so a factor of 1
//! is the identity, with edge-clamped taps renormalized per sample.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Default largest accepted side length for decoded or produced images.
pub const DEFAULT_MAX_SIDE: u32 = 16384;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImagingError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("output {width}x{height} exceeds the maximum side of {max_side}")]
    Overflow {
        width: u64,
        height: u64,
        max_side: u32,
    },
    #[error("invalid scale factor {0}")]
    InvalidFactor(f64),
    #[error("unsupported Lanczos tap count {0}, expected 2 or 3")]
    UnsupportedTaps(u32),
}

/// Size limits applied to upscaler outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_side: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_side: DEFAULT_MAX_SIDE,
        }
    }
}

impl Limits {
    pub fn check(&self, width: u64, height: u64) -> Result<(u32, u32), ImagingError> {
        if width > u64::from(self.max_side) || height > u64::from(self.max_side) {
            return Err(ImagingError::Overflow {
                width,
                height,
                max_side: self.max_side,
            });
        }
        Ok((width as u32, height as u32))
    }
}

/// Row-major interleaved RGB, 8 bits per channel.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl core::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImagingError::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, pixels)
    }

    /// Builds an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self, ImagingError> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }
}

/// Real-valued luma per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LumaPlane {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl LumaPlane {
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

/// Rec. 601 luma, unquantized.
pub fn luma(img: &ImageBuffer) -> LumaPlane {
    let values = img
        .pixels
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect();
    LumaPlane {
        width: img.width,
        height: img.height,
        values,
    }
}

/// Integer-factor pixel replication.
pub fn upscale_nearest(
    img: &ImageBuffer,
    factor: u32,
    limits: Limits,
) -> Result<ImageBuffer, ImagingError> {
    if factor == 0 {
        return Err(ImagingError::InvalidFactor(0.0));
    }
    let (w, h) = limits.check(
        u64::from(img.width) * u64::from(factor),
        u64::from(img.height) * u64::from(factor),
    )?;
    let f = factor as usize;
    let row_bytes = w as usize * 3;
    let mut pixels = Vec::with_capacity(row_bytes * h as usize);
    let mut row = Vec::with_capacity(row_bytes);
    for sy in 0..img.height {
        row.clear();
        let src = &img.pixels[img.offset(0, sy)..img.offset(0, sy) + img.width as usize * 3];
        for px in src.chunks_exact(3) {
            for _ in 0..f {
                row.extend_from_slice(px);
            }
        }
        for _ in 0..f {
            pixels.extend_from_slice(&row);
        }
    }
    ImageBuffer::new(w, h, pixels)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = core::f64::consts::PI * x;
        libm::sin(px) / px
    }
}

/// Lanczos window `sinc(x) * sinc(x / a)` on `|x| < a`.
///
/// Exact at integer offsets: 1 at the origin, 0 elsewhere.
pub fn lanczos_kernel(x: f64, a: f64) -> f64 {
    if x.abs() >= a {
        0.0
    } else if x == libm::trunc(x) {
        if x == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        sinc(x) * sinc(x / a)
    }
}

/// Output length for a real scale factor: `ceil(len * factor)`.
pub fn scaled_len(len: u32, factor: f64) -> u64 {
    libm::ceil(f64::from(len) * factor) as u64
}

/// Center-aligned source coordinate of output sample `i`.
pub fn source_coord(i: u32, factor: f64) -> f64 {
    (f64::from(i) + 0.5) / factor - 0.5
}

/// Normalized taps for one output sample along one axis.
struct Taps {
    first: i64,
    weights: Vec<f64>,
}

fn axis_taps(out_len: u32, in_len: u32, factor: f64, a: f64) -> Vec<Taps> {
    (0..out_len)
        .map(|i| {
            let center = source_coord(i, factor);
            let first = libm::ceil(center - a) as i64;
            let last = libm::floor(center + a) as i64;
            let mut weights: Vec<f64> = (first..=last)
                .map(|j| lanczos_kernel(center - j as f64, a))
                .collect();
            let sum: f64 = weights.iter().sum();
            if sum != 0.0 {
                for w in &mut weights {
                    *w /= sum;
                }
            } else {
                // Degenerate window: fall back to the nearest source sample.
                let nearest = libm::round(center).clamp(0.0, f64::from(in_len - 1)) as i64;
                for (k, w) in weights.iter_mut().enumerate() {
                    *w = if first + k as i64 == nearest { 1.0 } else { 0.0 };
                }
            }
            Taps { first, weights }
        })
        .collect()
}

fn clamp_index(j: i64, len: u32) -> usize {
    j.clamp(0, i64::from(len) - 1) as usize
}

/// Rounds half away from zero and clamps into the 8-bit range.
pub fn quantize(v: f64) -> u8 {
    libm::round(v).clamp(0.0, 255.0) as u8
}

/// Separable Lanczos resampling by a real factor.
pub fn upscale_lanczos(
    img: &ImageBuffer,
    factor: f64,
    taps: u32,
    limits: Limits,
) -> Result<ImageBuffer, ImagingError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(ImagingError::InvalidFactor(factor));
    }
    if !(2..=3).contains(&taps) {
        return Err(ImagingError::UnsupportedTaps(taps));
    }
    let (w, h) = limits.check(scaled_len(img.width, factor), scaled_len(img.height, factor))?;
    if w == 0 || h == 0 {
        return Err(ImagingError::EmptyImage {
            width: w,
            height: h,
        });
    }
    let a = f64::from(taps);
    let (in_w, in_h) = (img.width, img.height);

    // Horizontal pass: in_h rows of w samples, f64 intermediates.
    let x_taps = axis_taps(w, in_w, factor, a);
    let mut horiz = vec![0.0f64; w as usize * in_h as usize * 3];
    for y in 0..in_h as usize {
        let src_row = &img.pixels[y * in_w as usize * 3..(y + 1) * in_w as usize * 3];
        let dst_row = &mut horiz[y * w as usize * 3..(y + 1) * w as usize * 3];
        for (x, t) in x_taps.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for (k, wgt) in t.weights.iter().enumerate() {
                let sx = clamp_index(t.first + k as i64, in_w) * 3;
                for c in 0..3 {
                    acc[c] += wgt * f64::from(src_row[sx + c]);
                }
            }
            dst_row[x * 3..x * 3 + 3].copy_from_slice(&acc);
        }
    }

    // Vertical pass.
    let y_taps = axis_taps(h, in_h, factor, a);
    let stride = w as usize * 3;
    let mut pixels = vec![0u8; stride * h as usize];
    for (y, t) in y_taps.iter().enumerate() {
        let dst_row = &mut pixels[y * stride..(y + 1) * stride];
        for (i, out) in dst_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, wgt) in t.weights.iter().enumerate() {
                let sy = clamp_index(t.first + k as i64, in_h);
                acc += wgt * horiz[sy * stride + i];
            }
            *out = quantize(acc);
        }
    }
    ImageBuffer::new(w, h, pixels)
}
