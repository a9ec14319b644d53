//! IO, wire clients, benchmark harness and command-line surface for the
//! artpress engine. Algorithms live in [`artpress_core`]; this crate reads
//! and writes files, talks to model backends and orchestrates runs.

pub mod bench;
pub mod db;
pub mod error;
pub mod http;
pub mod llm;
pub mod mock;
pub mod pipeline;
pub mod png_io;
pub mod remote;
pub mod report;
pub mod telemetry;
pub mod upscaler;

pub use artpress_core as core;
pub use error::{Error, ExitCode};

/// Environment variable holding the chat endpoint base URL.
pub const ENV_LLM_URL: &str = "ARTPRESS_LLM_URL";
/// Environment variable holding the bearer token for the chat endpoint.
pub const ENV_LLM_API_KEY: &str = "ARTPRESS_LLM_API_KEY";
pub const ENV_GEN_URL: &str = "ARTPRESS_GEN_URL";
pub const ENV_UPSCALE_URL: &str = "ARTPRESS_UPSCALE_URL";
