//! Upscaler registry entries: native resamplers or remote backends.

use std::str::FromStr;

use artpress_core::imaging::{upscale_lanczos, upscale_nearest, ImageBuffer, ImagingError, Limits};
use serde::{Deserialize, Serialize};

use crate::remote::{upscale_remote, Endpoint, RemoteError};

pub const DEFAULT_SCALE: f64 = 4.0;
pub const LANCZOS_TAPS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpscalerKind {
    NativeNearest,
    NativeLanczos,
    Remote,
}

fn default_scale() -> f64 {
    DEFAULT_SCALE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpscalerSpec {
    pub id: String,
    pub kind: UpscalerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UpscaleError {
    #[error("invalid upscaler `{id}`: {reason}")]
    Config { id: String, reason: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

impl UpscalerSpec {
    pub fn nearest(scale: f64) -> Self {
        Self {
            id: "NEAREST".into(),
            kind: UpscalerKind::NativeNearest,
            endpoint: None,
            scale,
        }
    }

    pub fn lanczos(scale: f64) -> Self {
        Self {
            id: "LANCZOS".into(),
            kind: UpscalerKind::NativeLanczos,
            endpoint: None,
            scale,
        }
    }

    pub fn remote(id: impl Into<String>, endpoint: impl Into<String>, scale: f64) -> Self {
        Self {
            id: id.into(),
            kind: UpscalerKind::Remote,
            endpoint: Some(endpoint.into()),
            scale,
        }
    }

    /// Parses the command-line form `nearest`, `lanczos` or `remote:<url>`.
    pub fn parse_cli(s: &str, scale: f64) -> Result<Self, UpscaleError> {
        let spec = match s {
            "nearest" => Self::nearest(scale),
            "lanczos" => Self::lanczos(scale),
            _ => match s.strip_prefix("remote:") {
                Some(url) if !url.is_empty() => Self::remote("REMOTE", url, scale),
                Some(_) => match std::env::var(crate::ENV_UPSCALE_URL) {
                    Ok(url) => Self::remote("REMOTE", url, scale),
                    Err(_) => {
                        return Err(UpscaleError::Config {
                            id: s.into(),
                            reason: format!("no URL given and {} is unset", crate::ENV_UPSCALE_URL),
                        })
                    }
                },
                None => {
                    return Err(UpscaleError::Config {
                        id: s.into(),
                        reason: "expected nearest, lanczos or remote:<url>".into(),
                    })
                }
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_remote(&self) -> bool {
        self.kind == UpscalerKind::Remote
    }

    pub fn validate(&self) -> Result<(), UpscaleError> {
        let fail = |reason: &str| {
            Err(UpscaleError::Config {
                id: self.id.clone(),
                reason: reason.into(),
            })
        };
        if self.id.trim().is_empty() {
            return fail("id must not be empty");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return fail("scale must be positive");
        }
        match self.kind {
            UpscalerKind::Remote if self.endpoint.as_deref().is_none_or(str::is_empty) => {
                fail("remote upscalers need an endpoint")
            }
            UpscalerKind::NativeNearest if self.scale.fract() != 0.0 => {
                fail("nearest upscaling needs an integer scale")
            }
            _ => Ok(()),
        }
    }

    pub fn upscale(&self, img: &ImageBuffer) -> Result<ImageBuffer, UpscaleError> {
        self.validate()?;
        let limits = Limits::default();
        Ok(match self.kind {
            UpscalerKind::NativeNearest => upscale_nearest(img, self.scale as u32, limits)?,
            UpscalerKind::NativeLanczos => upscale_lanczos(img, self.scale, LANCZOS_TAPS, limits)?,
            UpscalerKind::Remote => {
                let endpoint = Endpoint::parse(self.endpoint.as_deref().unwrap_or_default());
                upscale_remote(&endpoint, img, self.scale)?
            }
        })
    }
}

impl FromStr for UpscalerSpec {
    type Err = UpscaleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_cli(s, DEFAULT_SCALE)
    }
}
