//! Allocation-only core of the artpress engine.
//!
//! Everything here is pure computation over in-memory values: prompt
//! retrieval and templating, the three prompt-enhancement strategies
//! (driven through the [`enhance::ChatBackend`] and [`ragstore::Embedder`]
//! traits), classical resamplers, no-reference quality metrics, GPU
//! telemetry aggregation and print-product validation. File formats,
//! HTTP transports and the command line live in the `artpress` crate.
#![no_std]

extern crate alloc;

pub mod enhance;
pub mod imaging;
pub mod product;
pub mod quality;
pub mod ragstore;
pub mod rng;

pub use enhance::{Method, PromptPair};
pub use imaging::{ImageBuffer, LumaPlane};
pub use product::{ProductSpec, Verdict};
pub use quality::{QualityScores, TelemetrySample, TelemetrySummary};
pub use ragstore::{Kind, PromptRecord, ScoredRecord, Store};
