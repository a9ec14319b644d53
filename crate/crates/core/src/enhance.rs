//! Prompt enhancement: base prompt in, positive/negative prompt pair out.
//!
//! Three strategies share one [`Enhancer`]:
//! - [`Method::Llm`]: two chat calls, one per pathway.
//! - [`Method::RagMultishot`]: the same two calls, each seeded with
//!   retrieved examples (most similar for the positive pathway, least
//!   similar for the negative one).
//! - [`Method::Template`]: no model at all; a similarity-weighted random
//!   template is filled with the base prompt.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::ragstore::{
    render_template, weighted_pick, Embedder, Kind, KindFilter, RagError, ScoredRecord, Store,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Llm,
    #[serde(alias = "rag-multishot")]
    RagMultishot,
    Template,
}

impl Method {
    /// Accepts both `rag_multishot` and the command-line spelling `rag-multishot`.
    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "llm" => Some(Method::Llm),
            "rag_multishot" | "rag-multishot" => Some(Method::RagMultishot),
            "template" => Some(Method::Template),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Llm => "llm",
            Method::RagMultishot => "rag_multishot",
            Method::Template => "template",
        }
    }
}

/// Positive and negative prompt handed to an image generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPair {
    pub positive: String,
    pub negative: String,
    pub method: Method,
    pub base: String,
    /// Wall-clock seconds spent producing the pair.
    pub elapsed: f64,
    /// Ids of store records that contributed to the pair.
    #[serde(default)]
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ChatError> {
        match self.messages.first() {
            None => Err(ChatError::InvalidRequest("messages must not be empty".into())),
            Some(m) if m.role == Role::Assistant => Err(ChatError::InvalidRequest(
                "first message must be a system or user message".into(),
            )),
            _ if !(0.0..=2.0).contains(&self.temperature) => Err(ChatError::InvalidRequest(
                format!("temperature {} outside [0, 2]", self.temperature),
            )),
            _ => Ok(()),
        }
    }

    /// Content of the last user message, if any.
    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChatError {
    #[error("request timed out")]
    Timeout,
    #[error("backend returned HTTP {0}")]
    Http(u16),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<ChatError> },
}

impl ChatError {
    /// Whether a retry could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            ChatError::Timeout | ChatError::Transport(_) => true,
            ChatError::Http(status) => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A chat-completion endpoint.
pub trait ChatBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        (**self).chat(request)
    }
}

/// Monotonic seconds source used to stamp [`PromptPair::elapsed`].
pub trait Clock {
    fn now_secs(&self) -> f64;
}

/// Clock that never advances; for callers without a time source.
#[derive(Debug, Default, Clone, Copy)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_secs(&self) -> f64 {
        0.0
    }
}

/// System prompts for the model-backed strategies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instructions {
    pub version: String,
    pub positive: String,
    pub negative: String,
    pub multishot_positive: String,
    pub multishot_negative: String,
}

impl Default for Instructions {
    fn default() -> Self {
        Self {
            version: "v1".into(),
            positive: include_str!("../assets/instructions/v1/positive.txt").into(),
            negative: include_str!("../assets/instructions/v1/negative.txt").into(),
            multishot_positive: include_str!("../assets/instructions/v1/multishot_positive.txt")
                .into(),
            multishot_negative: include_str!("../assets/instructions/v1/multishot_negative.txt")
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceOptions {
    /// Examples per pathway for multishot.
    pub k_examples: usize,
    /// Templates retrieved before the weighted pick.
    pub k_templates: usize,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub retries: u32,
    pub max_tokens: u32,
    pub model: String,
    /// Draw multishot negatives from positive and negative examples alike.
    pub shared_negative_pool: bool,
}

impl Default for EnhanceOptions {
    fn default() -> Self {
        Self {
            k_examples: 4,
            k_templates: 8,
            temperature: 0.8,
            timeout_secs: 60.0,
            retries: 3,
            max_tokens: 200,
            model: "default".into(),
            shared_negative_pool: false,
        }
    }
}

impl EnhanceOptions {
    pub fn validate(&self) -> Result<(), EnhanceError> {
        if self.k_examples == 0 || self.k_templates == 0 {
            return Err(EnhanceError::InvalidOptions("k must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(EnhanceError::InvalidOptions(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnhanceError {
    #[error("base prompt is empty")]
    EmptyBase,
    #[error("{pathway} pathway produced an empty prompt")]
    EmptyOutput { pathway: &'static str },
    #[error("method requires a prompt store")]
    MissingStore,
    #[error("method requires a chat backend")]
    MissingBackend,
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Chat(#[from] ChatError),
}

/// Strips surrounding whitespace and one layer of matching quotes.
pub fn clean_output(raw: &str) -> String {
    let t = raw.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}'), ('`', '`')] {
        if t.len() >= open.len_utf8() + close.len_utf8() && t.starts_with(open) && t.ends_with(close)
        {
            return t[open.len_utf8()..t.len() - close.len_utf8()].trim().to_string();
        }
    }
    t.to_string()
}

/// User message carrying a numbered example list and the base prompt.
pub fn numbered_examples_message(heading: &str, examples: &[&str], base: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{heading}");
    for (i, ex) in examples.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, ex);
    }
    let _ = write!(out, "\nBase prompt: {base}");
    out
}

pub const POSITIVE_EXAMPLES_HEADING: &str = "Example prompts:";
pub const NEGATIVE_EXAMPLES_HEADING: &str = "Negative prompt examples (dissimilar images):";

const NEGATIVE_PICK_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Runs the enhancement strategies against shared resources.
pub struct Enhancer<'a> {
    pub store: Option<&'a Store>,
    pub embedder: &'a dyn Embedder,
    pub backend: Option<&'a dyn ChatBackend>,
    pub instructions: &'a Instructions,
    pub options: EnhanceOptions,
    pub clock: &'a dyn Clock,
}

impl<'a> Enhancer<'a> {
    pub fn enhance(&self, method: Method, base: &str, seed: u64) -> Result<PromptPair, EnhanceError> {
        match method {
            Method::Llm => self.llm(base, seed),
            Method::RagMultishot => self.multishot(base, seed),
            Method::Template => self.template(base, seed),
        }
    }

    fn request(&self, system: &str, user: String, seed: u64) -> ChatRequest {
        ChatRequest {
            model: self.options.model.clone(),
            messages: alloc::vec![ChatMessage::system(system.trim_end()), ChatMessage::user(user)],
            temperature: self.options.temperature,
            max_tokens: self.options.max_tokens,
            seed: Some(seed),
        }
    }

    /// The positive and negative requests issued by [`Method::Llm`].
    pub fn llm_requests(&self, base: &str, seed: u64) -> (ChatRequest, ChatRequest) {
        let user = format!("Base prompt: {base}");
        (
            self.request(&self.instructions.positive, user.clone(), seed),
            self.request(&self.instructions.negative, user, seed),
        )
    }

    /// The positive and negative requests issued by [`Method::RagMultishot`].
    pub fn multishot_requests(
        &self,
        base: &str,
        positives: &[&str],
        negatives: &[&str],
        seed: u64,
    ) -> (ChatRequest, ChatRequest) {
        (
            self.request(
                &self.instructions.multishot_positive,
                numbered_examples_message(POSITIVE_EXAMPLES_HEADING, positives, base),
                seed,
            ),
            self.request(
                &self.instructions.multishot_negative,
                numbered_examples_message(NEGATIVE_EXAMPLES_HEADING, negatives, base),
                seed,
            ),
        )
    }

    fn backend(&self) -> Result<&'a dyn ChatBackend, EnhanceError> {
        self.backend.ok_or(EnhanceError::MissingBackend)
    }

    fn store(&self) -> Result<&'a Store, EnhanceError> {
        self.store.ok_or(EnhanceError::MissingStore)
    }

    fn call(&self, request: &ChatRequest, pathway: &'static str) -> Result<String, EnhanceError> {
        request.validate()?;
        let response = self.backend()?.chat(request)?;
        let text = clean_output(&response.content);
        if pathway == "positive" && text.is_empty() {
            return Err(EnhanceError::EmptyOutput { pathway });
        }
        Ok(text)
    }

    pub fn llm(&self, base: &str, seed: u64) -> Result<PromptPair, EnhanceError> {
        let base = checked_base(base)?;
        self.options.validate()?;
        let start = self.clock.now_secs();
        let (pos_req, neg_req) = self.llm_requests(base, seed);
        let positive = self.call(&pos_req, "positive")?;
        let negative = self.call(&neg_req, "negative")?;
        Ok(PromptPair {
            positive,
            negative,
            method: Method::Llm,
            base: base.into(),
            elapsed: self.elapsed_since(start),
            provenance: Vec::new(),
        })
    }

    /// Records used as multishot examples: most similar positives, least similar negatives.
    pub fn multishot_examples(
        &self,
        base: &str,
    ) -> Result<(Vec<ScoredRecord<'a>>, Vec<ScoredRecord<'a>>), EnhanceError> {
        let store = self.store()?;
        let query = self.embedder.embed(base)?;
        let k = self.options.k_examples;
        let positives = store.top_k(&query, k, Kind::PositiveExample)?;
        let negative_pool = if self.options.shared_negative_pool {
            KindFilter::only(Kind::NegativeExample).or(Kind::PositiveExample)
        } else {
            KindFilter::only(Kind::NegativeExample)
        };
        let negatives = store.bottom_k(&query, k, negative_pool)?;
        Ok((positives, negatives))
    }

    pub fn multishot(&self, base: &str, seed: u64) -> Result<PromptPair, EnhanceError> {
        let base = checked_base(base)?;
        self.options.validate()?;
        let start = self.clock.now_secs();
        let (positives, negatives) = self.multishot_examples(base)?;
        let pos_texts: Vec<&str> = positives.iter().map(|s| s.record.text.as_str()).collect();
        let neg_texts: Vec<&str> = negatives.iter().map(|s| s.record.text.as_str()).collect();
        let (pos_req, neg_req) = self.multishot_requests(base, &pos_texts, &neg_texts, seed);
        let positive = self.call(&pos_req, "positive")?;
        let negative = self.call(&neg_req, "negative")?;
        let provenance = positives
            .iter()
            .chain(&negatives)
            .map(|s| s.record.id.clone())
            .collect();
        Ok(PromptPair {
            positive,
            negative,
            method: Method::RagMultishot,
            base: base.into(),
            elapsed: self.elapsed_since(start),
            provenance,
        })
    }

    pub fn template(&self, base: &str, seed: u64) -> Result<PromptPair, EnhanceError> {
        let base = checked_base(base)?;
        self.options.validate()?;
        let start = self.clock.now_secs();
        let store = self.store()?;
        let query = self.embedder.embed(base)?;
        let k = self.options.k_templates;

        let pos_candidates = store.top_k(&query, k, Kind::PositiveTemplate)?;
        let pos = weighted_pick(&pos_candidates, seed)?;
        let positive = render_template(&pos.text, base, Kind::PositiveTemplate)?;

        let neg_candidates = store.bottom_k(&query, k, Kind::NegativeTemplate)?;
        let neg = weighted_pick(&neg_candidates, seed ^ NEGATIVE_PICK_SALT)?;
        let negative = render_template(&neg.text, base, Kind::NegativeTemplate)?;

        Ok(PromptPair {
            positive,
            negative,
            method: Method::Template,
            base: base.into(),
            elapsed: self.elapsed_since(start),
            provenance: alloc::vec![pos.id.clone(), neg.id.clone()],
        })
    }

    fn elapsed_since(&self, start: f64) -> f64 {
        (self.clock.now_secs() - start).max(0.0)
    }
}

fn checked_base(base: &str) -> Result<&str, EnhanceError> {
    let trimmed = base.trim();
    if trimmed.is_empty() {
        Err(EnhanceError::EmptyBase)
    } else {
        Ok(trimmed)
    }
}
