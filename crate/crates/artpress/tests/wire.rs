//! Wire protocol against the loopback mock server and the shared schemas.

use std::path::Path;
use std::time::Duration;

use artpress::core::enhance::{ChatBackend, ChatError, ChatMessage, ChatRequest, ChatResponse, Usage};
use artpress::core::imaging::{upscale_nearest, ImageBuffer, Limits};
use artpress::core::quality::TelemetrySample;
use artpress::core::ragstore::{Embedder, HashEmbedder};
use artpress::core::rng::SeededRng;
use artpress::http::{JsonClient, TransportError};
use artpress::llm::{HttpChatBackend, RetryPolicy, Retrying};
use artpress::mock::{mock_generate, MockBehavior, MockServer, MOCK_GENERATOR_ID};
use artpress::remote::{
    encode_image_b64, generate_remote, upscale_remote, EmbedRequest, EmbedResponse, Endpoint, GenerateRequest,
    ImageResponse, RemoteEmbedder, RemoteError, UpscaleRequest,
};
use artpress::telemetry::{parse_telemetry_str, to_jsonl};
use serde_json::{json, Value};

const T: Duration = Duration::from_secs(10);

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    jsonschema::validator_for(&raw).unwrap()
}

fn assert_conforms(name: &str, value: &impl serde::Serialize) {
    let v = serde_json::to_value(value).unwrap();
    let errors: Vec<String> = schema(name).iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?} in {v}");
}

fn random_image(rng: &mut SeededRng, max: u32) -> ImageBuffer {
    let w = 1 + (rng.next_u64() % u64::from(max)) as u32;
    let h = 1 + (rng.next_u64() % u64::from(max)) as u32;
    let mut px = vec![0u8; (w * h * 3) as usize];
    rng.fill_bytes(&mut px);
    ImageBuffer::new(w, h, px).unwrap()
}

fn chat_request(text: &str) -> ChatRequest {
    ChatRequest {
        model: "default".into(),
        messages: vec![ChatMessage::system("be brief"), ChatMessage::user(text)],
        temperature: 0.8,
        max_tokens: 200,
        seed: Some(7),
    }
}

fn generate_request(seed: u64) -> GenerateRequest {
    GenerateRequest {
        positive: "a lighthouse in a storm".into(),
        negative: "watermark".into(),
        width: 96,
        height: 64,
        seed,
    }
}

#[test]
fn request_and_response_types_match_schemas() {
    assert_conforms("chat_request", &chat_request("hi"));
    assert_conforms(
        "chat_response",
        &ChatResponse {
            content: "x".into(),
            usage: Some(Usage {
                prompt_tokens: 3,
                completion_tokens: 1,
            }),
        },
    );
    assert_conforms("generate_request", &generate_request(1));
    let img = ImageBuffer::filled(2, 2, [1; 3]).unwrap();
    assert_conforms(
        "image_response",
        &ImageResponse {
            image: encode_image_b64(&img).unwrap(),
            model_id: "m".into(),
        },
    );
    assert_conforms(
        "upscale_request",
        &UpscaleRequest {
            image: encode_image_b64(&img).unwrap(),
            scale: 4.0,
        },
    );
    assert_conforms("embed_request", &EmbedRequest { texts: vec!["a".into()] });
    assert_conforms(
        "embed_response",
        &EmbedResponse {
            vectors: vec![HashEmbedder::default().embed("a").unwrap()],
        },
    );
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts.jsonl");
    for line in std::fs::read_to_string(fixture).unwrap().lines() {
        assert_conforms("prompt_record", &serde_json::from_str::<Value>(line).unwrap());
    }
}

#[test]
fn schemas_reject_out_of_contract_payloads() {
    let mut big = serde_json::to_value(generate_request(1)).unwrap();
    big["height"] = json!(4096);
    assert!(!schema("generate_request").is_valid(&big));
    assert!(!schema("telemetry_sample").is_valid(&json!({"t_ms": 0, "gpu_load_pct": 130.0, "vram_mb": 1.0, "device": "g"})));
    assert!(!schema("upscale_request").is_valid(&json!({"image": "", "scale": 0})));
}

#[test]
fn telemetry_jsonl_round_trips_and_conforms() {
    let samples: Vec<TelemetrySample> = (0..11)
        .map(|i| TelemetrySample {
            t_ms: i * 100,
            gpu_load_pct: (i * 9) as f64,
            vram_mb: 1024.0 + i as f64,
            device: "cuda:0".into(),
        })
        .collect();
    let text = to_jsonl(&samples);
    for line in text.lines() {
        assert_conforms("telemetry_sample", &serde_json::from_str::<Value>(line).unwrap());
    }
    assert_eq!(parse_telemetry_str(&text).unwrap(), samples);
}

#[test]
fn chat_echoes_over_http() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let backend = HttpChatBackend::new(server.url(), Some("token".into()), T);
    assert_eq!(backend.chat(&chat_request("a cat")).unwrap().content, "a cat");
}

#[test]
fn transient_http_errors_are_retried() {
    let server = MockServer::start(MockBehavior {
        fail_first: 2,
        fail_status: 503,
        ..MockBehavior::default()
    })
    .unwrap();
    let backend = Retrying::new(HttpChatBackend::new(server.url(), None, T), RetryPolicy::with_retries(3))
        .with_sleeper(|_| {});
    assert_eq!(backend.chat(&chat_request("again")).unwrap().content, "again");
    assert_eq!(backend.last_attempts(), 3);
    assert_eq!(server.requests(), 3);
}

#[test]
fn client_errors_fail_fast() {
    let server = MockServer::start(MockBehavior {
        always_fail: true,
        fail_status: 401,
        ..MockBehavior::default()
    })
    .unwrap();
    let backend = Retrying::new(HttpChatBackend::new(server.url(), None, T), RetryPolicy::with_retries(3))
        .with_sleeper(|_| {});
    assert_eq!(backend.chat(&chat_request("x")), Err(ChatError::Http(401)));
    assert_eq!(server.requests(), 1);
}

#[test]
fn generate_over_http_matches_in_process_mock() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let endpoint = Endpoint::parse(server.url());
    let req = generate_request(42);
    let a = generate_remote(&endpoint, &req).unwrap();
    let b = generate_remote(&endpoint, &req).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.image.width(), a.image.height()), (96, 64));
    assert_eq!(a.model_id, MOCK_GENERATOR_ID);
    assert_eq!(a.image, mock_generate(&req).unwrap());
    assert_ne!(a.image, generate_remote(&endpoint, &generate_request(43)).unwrap().image);
}

#[test]
fn wrong_generated_size_is_a_dimension_mismatch() {
    let server = MockServer::start(MockBehavior {
        generate_size: Some((64, 64)),
        ..MockBehavior::default()
    })
    .unwrap();
    let err = generate_remote(&Endpoint::parse(server.url()), &generate_request(1)).unwrap_err();
    assert_eq!(
        err,
        RemoteError::DimensionMismatch {
            expected_w: 96,
            expected_h: 64,
            actual_w: 64,
            actual_h: 64
        }
    );
}

#[test]
fn oversized_generate_is_unprocessable() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let mut body = serde_json::to_value(generate_request(1)).unwrap();
    body["height"] = json!(4096);
    let err = JsonClient::new(T)
        .post_json::<_, Value>(&format!("{}/generate", server.url()), &body)
        .unwrap_err();
    assert!(matches!(err, TransportError::Http { status: 422, .. }), "{err:?}");
    // The client refuses before sending.
    let mut req = generate_request(1);
    req.height = 4096;
    assert!(matches!(
        generate_remote(&Endpoint::parse(server.url()), &req),
        Err(RemoteError::InvalidRequest(_))
    ));
    assert_eq!(server.requests(), 1);
}

#[test]
fn remote_nearest_equals_native_nearest() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let endpoint = Endpoint::parse(server.url());
    let five = ImageBuffer::from_fn(5, 5, |x, y| [(x * 50) as u8, (y * 50) as u8, 7]).unwrap();
    assert_eq!(
        upscale_remote(&endpoint, &five, 3.0).unwrap(),
        upscale_nearest(&five, 3, Limits::default()).unwrap()
    );
    let mut rng = SeededRng::new(20);
    for _ in 0..20 {
        let img = random_image(&mut rng, 24);
        let scale = 1 + rng.next_u64() % 4;
        let remote = upscale_remote(&endpoint, &img, scale as f64).unwrap();
        assert_eq!(remote, upscale_nearest(&img, scale as u32, Limits::default()).unwrap());
    }
}

#[test]
fn zero_scale_is_rejected_before_any_request() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let img = ImageBuffer::filled(4, 4, [0; 3]).unwrap();
    for scale in [0.0, -1.0, f64::NAN] {
        assert!(matches!(
            upscale_remote(&Endpoint::parse(server.url()), &img, scale),
            Err(RemoteError::InvalidRequest(_))
        ));
    }
    assert_eq!(server.requests(), 0);
}

#[test]
fn backend_failures_surface_as_http_errors() {
    let server = MockServer::start(MockBehavior {
        always_fail: true,
        ..MockBehavior::default()
    })
    .unwrap();
    let img = ImageBuffer::filled(4, 4, [0; 3]).unwrap();
    assert!(matches!(
        upscale_remote(&Endpoint::parse(server.url()), &img, 2.0),
        Err(RemoteError::Http { status: 500, .. })
    ));
}

#[test]
fn unreachable_backend_is_a_connection_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = generate_remote(&Endpoint::parse(&format!("http://127.0.0.1:{port}")), &generate_request(1)).unwrap_err();
    assert!(matches!(err, RemoteError::Connection(_)), "{err:?}");
}

#[test]
fn remote_embeddings_match_local_hashing() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let remote = RemoteEmbedder::new(server.url(), 256, T);
    let local = HashEmbedder::default();
    let texts = ["a red fox", "neon city at night"];
    assert_eq!(remote.embed_batch(&texts).unwrap(), local.embed_batch(&texts).unwrap());
    assert!(remote.embed("!!!").is_err());
}
