//! No-reference quality metrics and GPU telemetry aggregation.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::imaging::{luma, ImageBuffer, LumaPlane};

/// Default block period for [`pixelation`].
pub const DEFAULT_PERIOD: u32 = 8;

const PIXELATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QualityError {
    #[error("image {width}x{height} is too small (need more than {min} on each side)")]
    TooSmall { width: u32, height: u32, min: u32 },
    #[error("block period must be at least 1")]
    ZeroPeriod,
    #[error("no telemetry samples")]
    Empty,
    #[error("sample {index}: {field} = {value} is out of range")]
    Range {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("sample {index}: t_ms {t_ms} precedes previous sample at {previous}")]
    NonMonotonicTime { index: usize, t_ms: u64, previous: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    /// In `(0, 1]`; higher is blurrier.
    pub blurriness: f64,
    /// Block-boundary gradient ratio; higher is blockier.
    pub pixelation: f64,
}

/// Both metrics on one image.
pub fn score(img: &ImageBuffer, period: u32) -> Result<QualityScores, QualityError> {
    let plane = luma(img);
    Ok(QualityScores {
        blurriness: blurriness_of(&plane)?,
        pixelation: pixelation_of(&plane, period)?,
    })
}

/// `1 / (1 + var)` of the 4-neighbour Laplacian over interior pixels.
pub fn blurriness(img: &ImageBuffer) -> Result<f64, QualityError> {
    blurriness_of(&luma(img))
}

pub fn blurriness_of(plane: &LumaPlane) -> Result<f64, QualityError> {
    let (w, h) = (plane.width, plane.height);
    if w < 3 || h < 3 {
        return Err(QualityError::TooSmall {
            width: w,
            height: h,
            min: 2,
        });
    }
    // Two passes over the responses for a stable variance.
    let response = |x: u32, y: u32| {
        plane.at(x, y - 1) + plane.at(x - 1, y) + plane.at(x + 1, y) + plane.at(x, y + 1)
            - 4.0 * plane.at(x, y)
    };
    let n = f64::from(w - 2) * f64::from(h - 2);
    let mut sum = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            sum += response(x, y);
        }
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let d = response(x, y) - mean;
            sq += d * d;
        }
    }
    Ok(1.0 / (1.0 + sq / n))
}

/// Mean absolute luma step across block boundaries over the mean step
/// across all neighbour pairs.
pub fn pixelation(img: &ImageBuffer, period: u32) -> Result<f64, QualityError> {
    pixelation_of(&luma(img), period)
}

pub fn pixelation_of(plane: &LumaPlane, period: u32) -> Result<f64, QualityError> {
    if period == 0 {
        return Err(QualityError::ZeroPeriod);
    }
    let (w, h) = (plane.width, plane.height);
    if w <= period || h <= period {
        return Err(QualityError::TooSmall {
            width: w,
            height: h,
            min: period,
        });
    }
    let (mut all_sum, mut all_n) = (0.0, 0u64);
    let (mut edge_sum, mut edge_n) = (0.0, 0u64);
    for y in 0..h {
        for x in 0..w {
            let v = plane.at(x, y);
            if x > 0 {
                let d = (v - plane.at(x - 1, y)).abs();
                all_sum += d;
                all_n += 1;
                if x % period == 0 {
                    edge_sum += d;
                    edge_n += 1;
                }
            }
            if y > 0 {
                let d = (v - plane.at(x, y - 1)).abs();
                all_sum += d;
                all_n += 1;
                if y % period == 0 {
                    edge_sum += d;
                    edge_n += 1;
                }
            }
        }
    }
    let boundary = edge_sum / edge_n as f64;
    let global = all_sum / all_n as f64;
    if boundary == 0.0 {
        return Ok(0.0);
    }
    Ok(boundary / (global + PIXELATION_EPS))
}

/// One GPU reading from a sidecar sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub t_ms: u64,
    pub gpu_load_pct: f64,
    pub vram_mb: f64,
    pub device: String,
}

impl TelemetrySample {
    fn check(&self, index: usize) -> Result<(), QualityError> {
        if !(0.0..=100.0).contains(&self.gpu_load_pct) {
            return Err(QualityError::Range {
                index,
                field: "gpu_load_pct",
                value: self.gpu_load_pct,
            });
        }
        if !(self.vram_mb >= 0.0 && self.vram_mb.is_finite()) {
            return Err(QualityError::Range {
                index,
                field: "vram_mb",
                value: self.vram_mb,
            });
        }
        Ok(())
    }
}

/// Checks ranges and nondecreasing time; errors carry the zero-based index.
pub fn validate_samples(samples: &[TelemetrySample]) -> Result<(), QualityError> {
    let mut previous: Option<u64> = None;
    for (index, s) in samples.iter().enumerate() {
        s.check(index)?;
        if let Some(p) = previous {
            if s.t_ms < p {
                return Err(QualityError::NonMonotonicTime {
                    index,
                    t_ms: s.t_ms,
                    previous: p,
                });
            }
        }
        previous = Some(s.t_ms);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub mean_load_pct: f64,
    pub max_load_pct: f64,
    pub peak_vram_mb: f64,
    pub duration_ms: u64,
    pub sample_count: usize,
}

pub fn summarize_telemetry(samples: &[TelemetrySample]) -> Result<TelemetrySummary, QualityError> {
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(QualityError::Empty),
    };
    let mut sum = 0.0;
    let mut max_load = f64::NEG_INFINITY;
    let mut peak = f64::NEG_INFINITY;
    for s in samples {
        sum += s.gpu_load_pct;
        max_load = max_load.max(s.gpu_load_pct);
        peak = peak.max(s.vram_mb);
    }
    // Rounding can push the mean of equal loads a hair above the max.
    let mean = (sum / samples.len() as f64).min(max_load);
    Ok(TelemetrySummary {
        mean_load_pct: mean,
        max_load_pct: max_load,
        peak_vram_mb: peak,
        duration_ms: last.t_ms.saturating_sub(first.t_ms),
        sample_count: samples.len(),
    })
}

/// 3x3 box blur with edge clamping, rounded to 8 bits.
pub fn box_blur(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width() as i64, img.height() as i64);
    ImageBuffer::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = [0u32; 3];
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let sx = (i64::from(x) + dx).clamp(0, w - 1) as u32;
                let sy = (i64::from(y) + dy).clamp(0, h - 1) as u32;
                let p = img.get(sx, sy);
                for c in 0..3 {
                    acc[c] += u32::from(p[c]);
                }
            }
        }
        acc.map(|v| ((v + 4) / 9) as u8)
    })
    .expect("dimensions come from a valid image")
}
