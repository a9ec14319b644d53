//! Generation, upscaling and embedding backends behind the wire protocol.
//!
//! An endpoint is either an HTTP base URL or `mock`, which routes to the
//! deterministic in-process implementations in [`crate::mock`].

use std::time::Duration;

use artpress_core::imaging::{scaled_len, ImageBuffer};
use artpress_core::ragstore::{normalize, Embedder, RagError};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::http::{join_url, JsonClient, TransportError};
use crate::mock;
use crate::png_io::{decode_png, encode_png};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);
pub const MIN_GENERATE_SIDE: u32 = 64;
pub const MAX_GENERATE_SIDE: u32 = 2048;
pub const DEFAULT_GENERATE_SIDE: u32 = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RemoteError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("backend unreachable: {0}")]
    Connection(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("could not decode returned image: {0}")]
    Decode(String),
    #[error("backend returned {actual_w}x{actual_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl From<TransportError> for RemoteError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Timeout => RemoteError::Timeout,
            TransportError::Http { status, body } => RemoteError::Http { status, body },
            TransportError::Malformed(m) => RemoteError::Malformed(m),
            TransportError::Connection(m) => RemoteError::Connection(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Mock,
    Http(String),
}

impl Endpoint {
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        if s == "mock" || s.starts_with("mock:") {
            Endpoint::Mock
        } else {
            Endpoint::Http(s.to_string())
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Mock => f.write_str("mock"),
            Endpoint::Http(url) => f.write_str(url),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub positive: String,
    pub negative: String,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl GenerateRequest {
    pub fn validate(&self) -> Result<(), RemoteError> {
        for side in [self.width, self.height] {
            if !(MIN_GENERATE_SIDE..=MAX_GENERATE_SIDE).contains(&side) {
                return Err(RemoteError::InvalidRequest(format!(
                    "size {}x{} outside [{MIN_GENERATE_SIDE}, {MAX_GENERATE_SIDE}]",
                    self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

/// Image payload returned by `/generate` and `/upscale`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageResponse {
    /// Base64 (standard alphabet, padded) PNG bytes.
    pub image: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpscaleRequest {
    /// Base64 PNG bytes.
    pub image: String,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

pub fn encode_image_b64(img: &ImageBuffer) -> Result<String, RemoteError> {
    let png = encode_png(img).map_err(|e| RemoteError::InvalidRequest(e.to_string()))?;
    Ok(BASE64.encode(png))
}

pub fn decode_image_b64(data: &str) -> Result<ImageBuffer, RemoteError> {
    let bytes = BASE64
        .decode(data.trim())
        .map_err(|e| RemoteError::Decode(e.to_string()))?;
    decode_png(&bytes).map_err(|e| RemoteError::Decode(e.to_string()))
}

fn expect_size(img: ImageBuffer, w: u32, h: u32) -> Result<ImageBuffer, RemoteError> {
    if (img.width(), img.height()) != (w, h) {
        return Err(RemoteError::DimensionMismatch {
            expected_w: w,
            expected_h: h,
            actual_w: img.width(),
            actual_h: img.height(),
        });
    }
    Ok(img)
}

/// Generated image plus the backend's model id.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub image: ImageBuffer,
    pub model_id: String,
}

pub fn generate_remote(endpoint: &Endpoint, req: &GenerateRequest) -> Result<Generated, RemoteError> {
    generate_remote_with_timeout(endpoint, req, DEFAULT_TIMEOUT)
}

pub fn generate_remote_with_timeout(
    endpoint: &Endpoint,
    req: &GenerateRequest,
    timeout: Duration,
) -> Result<Generated, RemoteError> {
    req.validate()?;
    let (image, model_id) = match endpoint {
        Endpoint::Mock => (mock::mock_generate(req)?, mock::MOCK_GENERATOR_ID.to_string()),
        Endpoint::Http(url) => {
            let resp: ImageResponse = JsonClient::new(timeout).post_json(&join_url(url, "/generate"), req)?;
            (decode_image_b64(&resp.image)?, resp.model_id)
        }
    };
    Ok(Generated {
        image: expect_size(image, req.width, req.height)?,
        model_id,
    })
}

pub fn upscale_remote(endpoint: &Endpoint, img: &ImageBuffer, scale: f64) -> Result<ImageBuffer, RemoteError> {
    upscale_remote_with_timeout(endpoint, img, scale, DEFAULT_TIMEOUT)
}

pub fn upscale_remote_with_timeout(
    endpoint: &Endpoint,
    img: &ImageBuffer,
    scale: f64,
    timeout: Duration,
) -> Result<ImageBuffer, RemoteError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(RemoteError::InvalidRequest(format!("scale {scale} must be positive")));
    }
    let (w, h) = (scaled_len(img.width(), scale), scaled_len(img.height(), scale));
    let (w, h) = (
        u32::try_from(w).map_err(|_| RemoteError::InvalidRequest("output too large".into()))?,
        u32::try_from(h).map_err(|_| RemoteError::InvalidRequest("output too large".into()))?,
    );
    let out = match endpoint {
        Endpoint::Mock => mock::mock_upscale(img, scale)?,
        Endpoint::Http(url) => {
            let req = UpscaleRequest {
                image: encode_image_b64(img)?,
                scale,
            };
            let resp: ImageResponse = JsonClient::new(timeout).post_json(&join_url(url, "/upscale"), &req)?;
            decode_image_b64(&resp.image)?
        }
    };
    expect_size(out, w, h)
}

/// Embedding provider reached over `POST <base>/v1/embed`.
pub struct RemoteEmbedder {
    client: JsonClient,
    url: String,
    dimension: usize,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, dimension: usize, timeout: Duration) -> Self {
        Self {
            client: JsonClient::new(timeout),
            url: join_url(base_url, "/v1/embed"),
            dimension,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RagError> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| RagError::Provider("empty response".into()))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RagError> {
        if texts.iter().any(|t| artpress_core::ragstore::tokenize(t).next().is_none()) {
            return Err(RagError::EmptyText);
        }
        let req = EmbedRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let resp: EmbedResponse = self
            .client
            .post_json(&self.url, &req)
            .map_err(|e| RagError::Provider(e.to_string()))?;
        if resp.vectors.len() != texts.len() {
            return Err(RagError::Provider(format!(
                "expected {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|mut v| {
                if v.len() != self.dimension {
                    return Err(RagError::DimensionMismatch {
                        expected: self.dimension,
                        actual: v.len(),
                    });
                }
                normalize(&mut v)?;
                Ok(v)
            })
            .collect()
    }
}
