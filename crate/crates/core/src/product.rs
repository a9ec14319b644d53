//! Print-product resolution requirements.

use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::imaging::ImageBuffer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSpec {
    pub name: String,
    pub min_width: u32,
    pub min_height: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProductError {
    #[error("unknown product `{0}`: expected art_print, duvet or WxH")]
    Unknown(String),
    #[error("product minima must be at least 1")]
    ZeroMinimum,
}

impl ProductSpec {
    pub fn new(name: impl Into<String>, min_width: u32, min_height: u32) -> Result<Self, ProductError> {
        if min_width == 0 || min_height == 0 {
            return Err(ProductError::ZeroMinimum);
        }
        Ok(Self {
            name: name.into(),
            min_width,
            min_height,
        })
    }

    /// Large-format art print.
    pub fn art_print() -> Self {
        Self {
            name: "art_print".into(),
            min_width: 6500,
            min_height: 6500,
        }
    }

    pub fn duvet() -> Self {
        Self {
            name: "duvet".into(),
            min_width: 7632,
            min_height: 6480,
        }
    }

    /// Parses a preset name or a `WxH` pair.
    pub fn parse(s: &str) -> Result<Self, ProductError> {
        match s {
            "art_print" => return Ok(Self::art_print()),
            "duvet" => return Ok(Self::duvet()),
            _ => {}
        }
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| ProductError::Unknown(s.to_string()))?;
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|_| ProductError::Unknown(s.to_string()));
        let (w, h) = (parse(w)?, parse(h)?);
        Self::new(format!("{w}x{h}"), w, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Ok,
    /// Smallest uniform scale that would satisfy both minima.
    Insufficient { required_extra_scale: f64 },
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }
}

pub fn validate_dimensions(width: u32, height: u32, spec: &ProductSpec) -> Verdict {
    if width >= spec.min_width && height >= spec.min_height {
        Verdict::Ok
    } else {
        let sx = f64::from(spec.min_width) / f64::from(width);
        let sy = f64::from(spec.min_height) / f64::from(height);
        Verdict::Insufficient {
            required_extra_scale: sx.max(sy),
        }
    }
}

pub fn validate_for_product(img: &ImageBuffer, spec: &ProductSpec) -> Verdict {
    validate_dimensions(img.width(), img.height(), spec)
}
