//! Deterministic in-process backends and a loopback HTTP server speaking
//! the same wire protocol, so every stage runs without models or GPUs.

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use artpress_core::enhance::{ChatBackend, ChatError, ChatRequest, ChatResponse};
use artpress_core::imaging::{upscale_nearest, ImageBuffer, Limits};
use artpress_core::ragstore::{fnv1a64, Embedder, HashEmbedder};
use artpress_core::rng::SeededRng;
use serde::Serialize;

use crate::remote::{
    decode_image_b64, encode_image_b64, EmbedRequest, EmbedResponse, GenerateRequest, ImageResponse,
    RemoteError, UpscaleRequest,
};

pub const MOCK_GENERATOR_ID: &str = "mock-noise-v1";
pub const MOCK_UPSCALER_ID: &str = "mock-nearest-v1";

/// Seeded smooth noise of the requested size.
///
/// A handful of sinusoids with seeded frequencies and phases per channel,
/// plus a small seeded dither, so images are distinct per request but
/// compress well.
pub fn mock_generate(req: &GenerateRequest) -> Result<ImageBuffer, RemoteError> {
    req.validate()?;
    let key = req.seed
        ^ fnv1a64(req.positive.as_bytes()).rotate_left(17)
        ^ fnv1a64(req.negative.as_bytes()).rotate_left(41);
    let mut rng = SeededRng::new(key);
    let mut waves = [[0.0f64; 4]; 3];
    for channel in &mut waves {
        for p in channel.iter_mut() {
            *p = rng.next_unit();
        }
    }
    let (w, h) = (f64::from(req.width), f64::from(req.height));
    let tau = std::f64::consts::TAU;
    let mut dither = SeededRng::new(key.wrapping_add(1));
    ImageBuffer::from_fn(req.width, req.height, |x, y| {
        let (u, v) = (f64::from(x) / w, f64::from(y) / h);
        let noise = (dither.next_u64() % 5) as f64 - 2.0;
        waves.map(|[fx, px, fy, py]| {
            let value = 128.0
                + 55.0 * (tau * (1.0 + 3.0 * fx) * u + tau * px).sin()
                + 55.0 * (tau * (1.0 + 3.0 * fy) * v + tau * py).cos()
                + noise;
            value.round().clamp(0.0, 255.0) as u8
        })
    })
    .map_err(|e| RemoteError::InvalidRequest(e.to_string()))
}

/// Nearest-neighbour upscaling; only integer scales are supported.
pub fn mock_upscale(img: &ImageBuffer, scale: f64) -> Result<ImageBuffer, RemoteError> {
    if !(scale >= 1.0 && scale.fract() == 0.0 && scale <= f64::from(u32::MAX)) {
        return Err(RemoteError::InvalidRequest(format!(
            "mock upscaler supports integer scales only, got {scale}"
        )));
    }
    upscale_nearest(img, scale as u32, Limits::default())
        .map_err(|e| RemoteError::InvalidRequest(e.to_string()))
}

/// Replies with the content of the last user message.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoChat;

impl ChatBackend for EchoChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        request.validate()?;
        let content = request
            .last_user()
            .ok_or_else(|| ChatError::InvalidRequest("no user message".into()))?;
        Ok(ChatResponse {
            content: content.to_string(),
            usage: None,
        })
    }
}

/// Fails the first `failures` calls with a fixed error, then echoes.
#[derive(Debug)]
pub struct ScriptedChat {
    failures: u32,
    error: ChatError,
    calls: AtomicU32,
}

impl ScriptedChat {
    pub fn failing(failures: u32, error: ChatError) -> Self {
        Self {
            failures,
            error,
            calls: AtomicU32::new(0),
        }
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            return Err(self.error.clone());
        }
        EchoChat.chat(request)
    }
}

/// Chat backend that fails every call; proves a code path never calls it.
#[derive(Debug, Default)]
pub struct UnreachableChat {
    calls: AtomicU32,
}

impl UnreachableChat {
    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for UnreachableChat {
    fn chat(&self, _: &ChatRequest) -> Result<ChatResponse, ChatError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(ChatError::Transport("network access is forbidden here".into()))
    }
}

/// Knobs for [`MockServer`] failure injection.
#[derive(Debug, Clone)]
pub struct MockBehavior {
    /// Number of initial requests answered with `fail_status`.
    pub fail_first: usize,
    pub fail_status: u16,
    pub always_fail: bool,
    /// Return images of this size from `/generate` regardless of the request.
    pub generate_size: Option<(u32, u32)>,
}

impl Default for MockBehavior {
    fn default() -> Self {
        Self {
            fail_first: 0,
            fail_status: 500,
            always_fail: false,
            generate_size: None,
        }
    }
}

/// Loopback HTTP server for `/v1/chat`, `/v1/embed`, `/generate`, `/upscale`.
pub struct MockServer {
    url: String,
    server: Arc<tiny_http::Server>,
    requests: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(behavior: MockBehavior) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("server has no IP address"))?;
        let server = Arc::new(server);
        let requests = Arc::new(AtomicUsize::new(0));
        let worker = {
            let server = server.clone();
            let requests = requests.clone();
            std::thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let n = requests.fetch_add(1, Ordering::SeqCst);
                    let mut body = Vec::new();
                    let _ = request.as_reader().read_to_end(&mut body);
                    let (status, payload) = if behavior.always_fail || n < behavior.fail_first {
                        (behavior.fail_status, r#"{"error":"injected failure"}"#.to_string())
                    } else {
                        route(request.url(), &body, &behavior)
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
                        .expect("static header");
                    let response = tiny_http::Response::from_string(payload)
                        .with_status_code(status)
                        .with_header(header);
                    let _ = request.respond(response);
                }
            })
        };
        Ok(Self {
            url: format!("http://127.0.0.1:{port}"),
            server,
            requests,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests received so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn json<T: Serialize>(value: &T) -> (u16, String) {
    (200, serde_json::to_string(value).expect("responses serialize"))
}

fn unprocessable(message: impl std::fmt::Display) -> (u16, String) {
    (422, serde_json::json!({ "error": message.to_string() }).to_string())
}

fn route(url: &str, body: &[u8], behavior: &MockBehavior) -> (u16, String) {
    match url {
        "/v1/chat" => match serde_json::from_slice::<ChatRequest>(body) {
            Ok(req) => match EchoChat.chat(&req) {
                Ok(resp) => json(&resp),
                Err(e) => unprocessable(e),
            },
            Err(e) => unprocessable(e),
        },
        "/v1/embed" => match serde_json::from_slice::<EmbedRequest>(body) {
            Ok(req) => {
                let texts: Vec<&str> = req.texts.iter().map(String::as_str).collect();
                match HashEmbedder::default().embed_batch(&texts) {
                    Ok(vectors) => json(&EmbedResponse { vectors }),
                    Err(e) => unprocessable(e),
                }
            }
            Err(e) => unprocessable(e),
        },
        "/generate" => match serde_json::from_slice::<GenerateRequest>(body) {
            Ok(mut req) => {
                if let Err(e) = req.validate() {
                    return unprocessable(e);
                }
                if let Some((w, h)) = behavior.generate_size {
                    req.width = w;
                    req.height = h;
                }
                match mock_generate(&req).and_then(|img| encode_image_b64(&img)) {
                    Ok(image) => json(&ImageResponse {
                        image,
                        model_id: MOCK_GENERATOR_ID.into(),
                    }),
                    Err(e) => unprocessable(e),
                }
            }
            Err(e) => unprocessable(e),
        },
        "/upscale" => match serde_json::from_slice::<UpscaleRequest>(body) {
            Ok(req) => match decode_image_b64(&req.image)
                .and_then(|img| mock_upscale(&img, req.scale))
                .and_then(|img| encode_image_b64(&img))
            {
                Ok(image) => json(&ImageResponse {
                    image,
                    model_id: MOCK_UPSCALER_ID.into(),
                }),
                Err(e) => unprocessable(e),
            },
            Err(e) => unprocessable(e),
        },
        _ => (404, r#"{"error":"not found"}"#.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_upscale_rejects_fractional_scales() {
        let img = ImageBuffer::filled(2, 2, [1; 3]).unwrap();
        assert!(mock_upscale(&img, 1.5).is_err());
        assert!(mock_upscale(&img, 0.0).is_err());
        assert_eq!(mock_upscale(&img, 2.0).unwrap().width(), 4);
    }

    #[test]
    fn generated_content_depends_on_prompts() {
        let mut req = GenerateRequest {
            positive: "a".into(),
            negative: "".into(),
            width: 64,
            height: 64,
            seed: 1,
        };
        let a = mock_generate(&req).unwrap();
        req.positive = "b".into();
        assert_ne!(a, mock_generate(&req).unwrap());
    }

    #[test]
    fn server_counts_and_shuts_down() {
        let server = MockServer::start(MockBehavior::default()).unwrap();
        let client = crate::http::JsonClient::new(std::time::Duration::from_secs(5));
        let err = client
            .post_json::<_, serde_json::Value>(&format!("{}/nope", server.url()), &serde_json::json!({}))
            .unwrap_err();
        assert!(matches!(err, crate::http::TransportError::Http { status: 404, .. }));
        assert_eq!(server.requests(), 1);
    }
}
