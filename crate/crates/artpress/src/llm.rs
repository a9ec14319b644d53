//! Chat transport: HTTP backend, retry with backoff, in-flight limiting.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use artpress_core::enhance::{ChatBackend, ChatError, ChatRequest, ChatResponse, Clock};
use artpress_core::rng::SeededRng;

use crate::http::{join_url, JsonClient, TransportError};

/// POSTs [`ChatRequest`] JSON to `<base>/v1/chat`.
#[derive(Clone)]
pub struct HttpChatBackend {
    client: JsonClient,
    url: String,
}

impl HttpChatBackend {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            client: JsonClient::new(timeout).with_bearer(api_key),
            url: join_url(base_url, "/v1/chat"),
        }
    }

    /// Endpoint and key from `ARTPRESS_LLM_URL` / `ARTPRESS_LLM_API_KEY`.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        let url = std::env::var(crate::ENV_LLM_URL).ok()?;
        Some(Self::new(&url, std::env::var(crate::ENV_LLM_API_KEY).ok(), timeout))
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        request.validate()?;
        let response: ChatResponse = self.client.post_json(&self.url, request).map_err(|e| match e {
            TransportError::Timeout => ChatError::Timeout,
            TransportError::Http { status, .. } => ChatError::Http(status),
            TransportError::Malformed(m) => ChatError::MalformedResponse(m),
            TransportError::Connection(m) => ChatError::Transport(m),
        })?;
        if response.content.trim().is_empty() {
            return Err(ChatError::MalformedResponse("empty content".into()));
        }
        Ok(response)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Extra attempts after the first.
    pub retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay: Duration::from_millis(500),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn with_retries(retries: u32) -> Self {
        Self {
            retries,
            ..Self::default()
        }
    }

    /// Upper bound of the jittered delay before retry number `retry` (0-based).
    pub fn delay_cap(&self, retry: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(retry as i32))
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// Retries transient failures with exponential backoff and full jitter.
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
    sleeper: Sleeper,
    jitter: Mutex<SeededRng>,
    last_attempts: AtomicU32,
}

impl<B: ChatBackend> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        let seed = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        Self {
            inner,
            policy,
            sleeper: Box::new(std::thread::sleep),
            jitter: Mutex::new(SeededRng::new(seed)),
            last_attempts: AtomicU32::new(0),
        }
    }

    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    /// Attempts made by the most recent call.
    pub fn last_attempts(&self) -> u32 {
        self.last_attempts.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for Retrying<B> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.last_attempts.store(attempt, Ordering::SeqCst);
            match self.inner.chat(request) {
                Ok(r) => return Ok(r),
                Err(e) if !e.is_transient() => return Err(e),
                Err(e) if attempt > self.policy.retries => {
                    return Err(ChatError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(_) => {
                    let u = self.jitter.lock().expect("jitter lock").next_unit();
                    (self.sleeper)(self.policy.delay_cap(attempt - 1).mul_f64(u));
                }
            }
        }
    }
}

/// Caps the number of concurrent calls into the wrapped backend.
pub struct Limited<B> {
    inner: B,
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub const DEFAULT_CONCURRENCY: usize = 4;

impl<B> Limited<B> {
    pub fn new(inner: B, max: usize) -> Self {
        Self {
            inner,
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

impl<B: ChatBackend> ChatBackend for Limited<B> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        {
            let mut n = self.in_flight.lock().expect("limit lock");
            while *n >= self.max {
                n = self.freed.wait(n).expect("limit lock");
            }
            *n += 1;
        }
        let result = self.inner.chat(request);
        *self.in_flight.lock().expect("limit lock") -= 1;
        self.freed.notify_one();
        result
    }
}

/// Monotonic clock anchored at construction.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
